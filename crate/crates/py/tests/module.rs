use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<F: FnOnce(Python<'_>, &Bound<'_, PyDict>)>(f: F) {
    Python::attach(|py| {
        let m = PyModule::new(py, "spinkernel").unwrap();
        spinkernel_py::register(&m).unwrap();
        let globals = PyDict::new(py);
        globals.set_item("sk", m).unwrap();
        f(py, &globals);
    });
}

fn run(py: Python<'_>, globals: &Bound<'_, PyDict>, code: &str) {
    let code = std::ffi::CString::new(code).unwrap();
    py.run(&code, Some(globals), None).unwrap();
}

#[test]
fn fidelity_and_gram() {
    with_module(|py, g| {
        run(
            py,
            g,
            r#"
a = sk.ModelParams(1.0, 0.9, 16)
b = sk.ModelParams(1.0, 1.1, 16)
f = sk.fidelity(a, b)
assert 0.0 < f < 1.0
assert abs(sk.fidelity(a, b, engine="ed") - f) < 1e-9
k = sk.gram([a, b], kind="per-site")
assert len(k) == 2 and k.get(0, 0) == 1.0
assert abs(k.get(0, 1) - f ** (1 / 16)) < 1e-12
assert k.is_exact and k.kind == "per-site"
"#,
        );
    });
}

#[test]
fn train_and_boundary() {
    with_module(|py, g| {
        run(
            py,
            g,
            r#"
hs = [0.7 + 0.05 * i for i in range(6)] + [1.05 + 0.05 * i for i in range(6)]
pts = [sk.ModelParams(0.5, h, 40) for h in hs]
k = sk.gram(pts)
m = sk.train(k, [-1] * 6 + [1] * 6)
assert abs(sum(a * y for a, y in zip(m.alphas, [-1] * 6 + [1] * 6))) < 1e-8
x = m.boundary(0.95, 1.05)
assert 0.95 < x < 1.05
assert m.decision(1.3) > 0 > m.decision(0.7)
s = sk.sample_gram(k, 10, seed=3)
assert not s.is_exact
spread, ca = k.shot_bounds()
assert spread is not None and spread > 0
"#,
        );
    });
}

#[test]
fn errors_map_to_python_exceptions() {
    with_module(|py, g| {
        run(
            py,
            g,
            r#"
try:
    sk.ModelParams(1.0, 1.0, 2)
    raise AssertionError("accepted two sites")
except ValueError:
    pass
try:
    sk.gram([sk.ModelParams(1.0, 1.0, 8)], engine="quantum")
    raise AssertionError("accepted unknown engine")
except ValueError:
    pass
params, sigmas = sk.fit_drift([16, 32, 64, 128], [1 - 0.5 / n for n in [16, 32, 64, 128]])
assert abs(params[0] - 1) < 1e-8 and abs(params[2] - 1) < 1e-8
"#,
        );
    });
}
