mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinkernel::kernel::FidelityKernel;
use common::brute_force_dual;
use spinkernel::svm::{boundary, midpoint_diagnostics, train, train_with, TrainOptions};
use spinkernel::swaptest::sample_gram;
use spinkernel::{gram, linspace, Control, Engine, GramMatrix, KernelKind, LabeledSet, ModelParams, ShotConfig};

fn random_problem(seed: u64) -> (GramMatrix, LabeledSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(2..=6);
    let base = ModelParams::ising(1.0, 8).unwrap();
    let data = loop {
        if let Ok(d) = LabeledSet::random_uniform(&base, Control::Field, (0.4, 1.6), 1.0, m, rng.random()) {
            break d;
        }
    };
    (gram(&data.points, KernelKind::Global, Engine::Analytic).unwrap(), data)
}

#[test]
fn matches_brute_force_dual() {
    for seed in 0..20 {
        let (k, data) = random_problem(seed);
        let model = train(&k, &data).unwrap();
        let oracle = brute_force_dual(&k, &data.labels);
        assert!(
            (model.objective - oracle).abs() <= 1e-6 * oracle.abs().max(1.0),
            "seed {seed}: {} vs {oracle}",
            model.objective
        );
        assert!(model.dual_residual().abs() <= 1e-8);
    }
}

#[test]
fn objective_never_decreases() {
    for seed in 0..10 {
        let (k, data) = random_problem(100 + seed);
        let opts = TrainOptions { polish: false, ..TrainOptions::default() };
        let h = train_with(&k, &data, &opts).unwrap().diagnostics.objective_history;
        assert!(h.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0)), "{h:?}");
    }
    let data = LabeledSet::from_windows(&ModelParams::xy(0.5, 1.0, 40).unwrap(), Control::Field, (0.7, 0.95), (1.05, 1.3), 16).unwrap();
    let k = gram(&data.points, KernelKind::Global, Engine::Analytic).unwrap();
    let opts = TrainOptions { polish: false, ..TrainOptions::default() };
    let h = train_with(&k, &data, &opts).unwrap().diagnostics.objective_history;
    assert!(h.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0)));
}

fn window_model(params: ModelParams, kind: KernelKind, left: (f64, f64), right: (f64, f64)) -> (spinkernel::SvmModel, GramMatrix, FidelityKernel) {
    let data = LabeledSet::from_windows(&params, Control::Field, left, right, 16).unwrap();
    let kernel = FidelityKernel::new(Engine::Analytic, kind);
    let k = kernel.gram(&data.points).unwrap();
    (train(&k, &data).unwrap(), k, kernel)
}

#[test]
fn support_vectors_sit_on_the_margin() {
    let (model, k, _) = window_model(ModelParams::xy(0.5, 1.0, 40).unwrap(), KernelKind::Global, (0.7, 0.95), (1.05, 1.3));
    let d = model.training_decisions(&k);
    for &i in &model.sv_index {
        if model.alphas[i] < model.c {
            assert!((f64::from(model.labels[i]) * d[i] - 1.0).abs() <= 1e-4, "{i}: {}", d[i]);
        }
    }
    assert!(model.dual_residual().abs() <= 1e-8);
    assert!(model.alphas.iter().all(|&a| (0.0..=model.c).contains(&a)));
}

#[test]
fn ising_windows_are_separated() {
    let (model, k, _) = window_model(ModelParams::ising(1.0, 16).unwrap(), KernelKind::Global, (0.7, 0.95), (1.05, 1.3));
    let d = model.training_decisions(&k);
    assert!(d.iter().zip(&model.labels).all(|(d, &y)| d * f64::from(y) > 0.0));
}

#[test]
fn xy_boundary_between_windows() {
    let (model, _, kernel) = window_model(ModelParams::xy(0.5, 1.0, 40).unwrap(), KernelKind::Global, (0.7, 0.95), (1.05, 1.3));
    let h = boundary(&model, &kernel, (0.95, 1.05)).unwrap();
    assert!(h > 0.95 && h < 1.05, "{h}");
    let d = model.decision_function(&kernel).unwrap();
    assert!(d.at_control(1.3).unwrap() > 0.0);
    assert!(d.at_control(0.7).unwrap() < 0.0);
}

#[test]
fn interior_points_do_not_move_boundary() {
    let base = ModelParams::xy(0.5, 1.0, 100).unwrap();
    let kernel = FidelityKernel::new(Engine::Analytic, KernelKind::PerSite);
    let estimate = |per_side| {
        let data = LabeledSet::from_windows(&base, Control::Field, (0.7, 0.95), (1.05, 1.3), per_side).unwrap();
        let model = train(&kernel.gram(&data.points).unwrap(), &data).unwrap();
        boundary(&model, &kernel, (0.95, 1.05)).unwrap()
    };
    let coarse = estimate(6);
    let fine = estimate(26);
    assert!((coarse - fine).abs() <= 1e-6, "{coarse} vs {fine}");
}

#[test]
fn ising_estimate_settles_with_more_points() {
    let base = ModelParams::ising(1.0, 12).unwrap();
    let kernel = FidelityKernel::new(Engine::Analytic, KernelKind::Global);
    let errors: Vec<f64> = [4, 8, 16]
        .iter()
        .map(|&per_side| {
            let xs = linspace(0.85, 1.15, 2 * per_side);
            let points: Vec<ModelParams> = xs.iter().map(|&h| base.with_control(Control::Field, h)).collect();
            let labels = xs.iter().map(|&h| if h < 1.0 { -1 } else { 1 }).collect();
            let data = LabeledSet::new(points, labels, Control::Field).unwrap();
            let model = train(&kernel.gram(&data.points).unwrap(), &data).unwrap();
            (boundary(&model, &kernel, (0.85, 1.15)).unwrap() - 1.0).abs()
        })
        .collect();
    assert!(errors[2] <= errors[0], "{errors:?}");
    assert!(errors[2] < 0.05, "{errors:?}");
}

#[test]
fn midpoint_matches_boundary_for_inner_endpoints() {
    let (model, _, kernel) = window_model(ModelParams::xy(0.5, 1.0, 400).unwrap(), KernelKind::PerSite, (0.76, 0.95), (1.05, 1.3));
    let grid = linspace(0.9, 1.1, 41);
    let mid = midpoint_diagnostics(&model, &kernel, &grid).unwrap();
    assert!((mid.x_left - 0.95).abs() < 1e-12 && (mid.x_right - 1.05).abs() < 1e-12, "{} {}", mid.x_left, mid.x_right);
    assert!(mid.x_mid > mid.x_left && mid.x_mid < mid.x_right);
    let h = boundary(&model, &kernel, (0.95, 1.05)).unwrap();
    assert!((h - mid.x_mid).abs() <= 1e-3, "{h} vs {}", mid.x_mid);
    assert_eq!(mid.similarity_left.len(), grid.len());
}

#[test]
fn trains_on_sampled_gram_and_reports_eigenvalue() {
    let data = LabeledSet::from_windows(&ModelParams::xy(1e-3, 1.0, 40).unwrap(), Control::Field, (0.7, 0.95), (1.05, 1.3), 16).unwrap();
    let exact = gram(&data.points, KernelKind::Global, Engine::Analytic).unwrap();
    let noisy = sample_gram(&exact, &ShotConfig::new(10, 7).unwrap()).unwrap();
    let model = train(&noisy, &data).unwrap();
    let ev = model.diagnostics.min_eigenvalue.unwrap();
    assert!(ev < 0.0 && (ev - noisy.min_eigenvalue()).abs() < 1e-12);
    assert!(model.dual_residual().abs() <= 1e-8);
    assert!(train(&exact, &data).unwrap().diagnostics.min_eigenvalue.is_none());
}

#[test]
fn model_json_round_trip() {
    let (model, _, _) = window_model(ModelParams::ising(1.0, 10).unwrap(), KernelKind::Global, (0.7, 0.95), (1.05, 1.3));
    let text = serde_json::to_string(&model).unwrap();
    let back: spinkernel::SvmModel = serde_json::from_str(&text).unwrap();
    assert_eq!(back, model);
}

#[test]
fn rejects_mismatched_gram() {
    let (_, k, _) = window_model(ModelParams::ising(1.0, 10).unwrap(), KernelKind::Global, (0.7, 0.95), (1.05, 1.3));
    let other = LabeledSet::from_windows(&ModelParams::ising(1.0, 12).unwrap(), Control::Field, (0.7, 0.95), (1.05, 1.3), 16).unwrap();
    assert!(train(&k, &other).is_err());
}
