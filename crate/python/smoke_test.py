"""Smoke test for the `spinkernel` Python extension.

Build it first with `maturin develop -m crates/py/Cargo.toml`.
"""

import json
import sys
import tempfile

import spinkernel as sk


def main():
    a = sk.ModelParams(0.5, 0.9, 40)
    b = sk.ModelParams(0.5, 1.1, 40)
    f = sk.fidelity(a, b)
    assert 0.0 < f < 1.0, f

    hs = [0.7 + 0.25 * i / 7 for i in range(8)] + [1.05 + 0.25 * i / 7 for i in range(8)]
    labels = [-1] * 8 + [1] * 8
    k = sk.gram([sk.ModelParams(0.5, h, 40) for h in hs])
    assert len(k) == 16 and k.min_eigenvalue() > -1e-10

    model = sk.train(k, labels)
    x = model.boundary(0.95, 1.05)
    assert 0.95 < x < 1.05, x
    print(f"boundary at h = {x:.6f} with {len(model.support_vectors)} support vectors")

    median, q1, q3, iqr = k.stats()
    spread, ca = k.shot_bounds(1e-3, 0.99)
    print(f"k_repr = {median:.4f}, iqr = {iqr:.4f}, s_spread = {spread:.3e}, s_ca = {ca:.3e}")

    noisy = sk.sample_gram(k, 100, seed=1)
    assert not noisy.is_exact

    sizes = [16, 32, 64, 128]
    params, sigmas = sk.fit_drift(sizes, [1.0 - 0.3 / n for n in sizes])
    assert abs(params[0] - 1.0) < 1e-8, params

    with tempfile.TemporaryDirectory() as out:
        cfg = {"preset": "ising", "sizes": [12, 16], "per_side": 4, "out_dir": out}
        manifest = json.loads(sk.run_pipeline(json.dumps(cfg)))
        print(f"pipeline wrote {len(manifest['files'])} files")

    try:
        sk.ModelParams(1.0, 1.0, 3)
    except ValueError as e:
        print(f"rejected odd chain: {e}")
    else:
        sys.exit("odd chain length accepted")
    print("ok")


if __name__ == "__main__":
    main()
