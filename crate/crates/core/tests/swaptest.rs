use proptest::prelude::*;
use spinkernel::swaptest::{sample_entry, sample_gram};
use spinkernel::{gram, linspace, Engine, KernelKind, ModelParams, Provenance, ShotConfig};

fn moments(k: f64, shots: u64, reps: usize, seed: u64) -> (f64, f64) {
    let cfg = ShotConfig::new(shots, seed).unwrap();
    let xs: Vec<f64> = (0..reps).map(|r| sample_entry(k, &cfg, (r, reps)).unwrap()).collect();
    let mean = xs.iter().sum::<f64>() / reps as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    (mean, var)
}

#[test]
fn unbiased_with_predicted_variance() {
    let (s, reps) = (10_000u64, 10_000usize);
    for k in [0.0, 0.25, 0.5, 0.9] {
        let (mean, var) = moments(k, s, reps, 17);
        let expected = (1.0 - k * k) / s as f64;
        assert!((mean - k).abs() <= 4.0 * expected.sqrt() / (reps as f64).sqrt(), "k={k}: mean {mean}");
        assert!(((var - expected) / expected).abs() <= 0.05, "k={k}: var {var} vs {expected}");
    }
    let (mean, var) = moments(1.0, s, 100, 17);
    assert_eq!((mean, var), (1.0, 0.0));
}

fn small_gram() -> spinkernel::GramMatrix {
    let pts: Vec<ModelParams> = linspace(0.8, 1.2, 4).iter().map(|&h| ModelParams::ising(h, 12).unwrap()).collect();
    gram(&pts, KernelKind::Global, Engine::Analytic).unwrap()
}

#[test]
fn many_shots_converge_to_exact() {
    let g = small_gram();
    let s = sample_gram(&g, &ShotConfig::new(100_000_000, 4).unwrap()).unwrap();
    let err = g.values().iter().zip(s.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 5e-4, "{err}");
    assert_eq!(s.provenance, Provenance::SwapSampled { seed: 4, shots: 100_000_000 });
}

#[test]
fn independent_of_thread_count() {
    let g = small_gram();
    let cfg = ShotConfig::new(1000, 99).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sample_gram(&g, &cfg).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn few_shots_keep_negative_estimates() {
    let pts: Vec<ModelParams> = linspace(0.5, 1.5, 12).iter().map(|&h| ModelParams::xy(1e-3, h, 40).unwrap()).collect();
    let g = gram(&pts, KernelKind::Global, Engine::Analytic).unwrap();
    let s = sample_gram(&g, &ShotConfig::new(10, 1).unwrap()).unwrap();
    assert!(s.values().iter().any(|&v| v < 0.0));
    assert!(s.min_eigenvalue() < 0.0);
    assert!(sample_gram(&s, &ShotConfig::new(10, 1).unwrap()).is_err());
}

#[test]
fn diagonal_can_be_left_exact() {
    let g = small_gram();
    let s = sample_gram(&g, &ShotConfig::new(50, 3).unwrap().skip_diagonal()).unwrap();
    for i in 0..g.len() {
        assert_eq!(s.get(i, i), 1.0);
    }
}

proptest! {
    #[test]
    fn estimates_on_shot_lattice(k in 0.0..=1.0f64, shots in 1u64..5000, seed in any::<u64>(), i in 0usize..50, j in 0usize..50) {
        let cfg = ShotConfig::new(shots, seed).unwrap();
        let v = sample_entry(k, &cfg, (i, j)).unwrap();
        prop_assert!((-1.0..=1.0).contains(&v));
        let m = (v + 1.0) * shots as f64 / 2.0;
        prop_assert!((m - m.round()).abs() < 1e-9);
        prop_assert_eq!(v, sample_entry(k, &cfg, (j, i)).unwrap());
    }
}
