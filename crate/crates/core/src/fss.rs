//! Finite-size drift fits of pseudo-critical points.
//!
//! Two three-parameter forms are fitted by Levenberg–Marquardt with analytic
//! Jacobians:
//!
//! - power law `x_c(N) = x_c + a N^{-p}`
//! - logarithmic (BKT) drift `x_c(N) = x_c + A / (ln N + B)²`

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ITER: usize = 500;
const LAMBDA0: f64 = 1e-3;
/// Smallest allowed `ln N + B` during BKT steps.
const BKT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftSource {
    Benchmark,
    SvmDelta1,
    SvmDelta2,
    SvmRandom,
    FidelityScan,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftData {
    pub sizes: Vec<f64>,
    pub estimates: Vec<f64>,
    pub source: DriftSource,
}

impl DriftData {
    pub fn new(sizes: Vec<f64>, estimates: Vec<f64>, source: DriftSource) -> Result<Self> {
        if sizes.len() != estimates.len() {
            return Err(Error::DimensionMismatch {
                expected: sizes.len(),
                got: estimates.len(),
            });
        }
        if sizes.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "drift fits need at least 3 sizes, got {}",
                sizes.len()
            )));
        }
        if sizes.windows(2).any(|w| !(w[0] < w[1])) || sizes[0] < 2.0 {
            return Err(Error::InvalidParams("sizes must be >= 2 and strictly increasing".into()));
        }
        if estimates.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidParams("estimates must be finite".into()));
        }
        Ok(DriftData {
            sizes,
            estimates,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftModel {
    /// Parameters (x_c, a, p).
    Power,
    /// Parameters (x_c, A, B).
    Bkt,
}

impl DriftModel {
    pub fn param_names(&self) -> [&'static str; 3] {
        match self {
            DriftModel::Power => ["x_c", "a", "p"],
            DriftModel::Bkt => ["x_c", "A", "B"],
        }
    }

    pub fn eval(&self, p: &Vector3<f64>, n: f64) -> f64 {
        match self {
            DriftModel::Power => p[0] + p[1] * n.powf(-p[2]),
            DriftModel::Bkt => {
                let l = n.ln() + p[2];
                p[0] + p[1] / (l * l)
            }
        }
    }

    fn gradient(&self, p: &Vector3<f64>, n: f64) -> Vector3<f64> {
        match self {
            DriftModel::Power => {
                let t = n.powf(-p[2]);
                Vector3::new(1.0, t, -p[1] * n.ln() * t)
            }
            DriftModel::Bkt => {
                let l = n.ln() + p[2];
                Vector3::new(1.0, 1.0 / (l * l), -2.0 * p[1] / (l * l * l))
            }
        }
    }

    /// Pull a trial point back into the domain of the model.
    fn clamp(&self, p: &mut Vector3<f64>, n_min: f64) {
        if let DriftModel::Bkt = self {
            let floor = -n_min.ln() + BKT_FLOOR;
            if p[2] < floor {
                p[2] = floor;
            }
        }
    }

    fn default_init(&self, data: &DriftData) -> Vector3<f64> {
        let last = *data.estimates.last().unwrap();
        let (n0, y0) = (data.sizes[0], data.estimates[0]);
        match self {
            DriftModel::Power => Vector3::new(last, (y0 - last) * n0, 1.0),
            DriftModel::Bkt => Vector3::new(last, (y0 - last) * n0.ln().powi(2), 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: DriftModel,
    pub source: DriftSource,
    pub params: [f64; 3],
    /// 1σ from (JᵀJ)⁻¹ scaled by RSS/(n − 3); infinite when n = 3.
    pub sigmas: [f64; 3],
    pub rss: f64,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_points: usize,
    /// RSS after each accepted step, starting from the initial guess.
    pub rss_history: Vec<f64>,
}

impl FitResult {
    pub fn predict(&self, n: f64) -> f64 {
        self.model.eval(&Vector3::from(self.params), n)
    }
}

fn rss(model: DriftModel, data: &DriftData, p: &Vector3<f64>) -> f64 {
    data.sizes
        .iter()
        .zip(&data.estimates)
        .map(|(&n, &y)| (y - model.eval(p, n)).powi(2))
        .sum()
}

fn normal_equations(model: DriftModel, data: &DriftData, p: &Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>) {
    let mut jtj = Matrix3::zeros();
    let mut jtr = Vector3::zeros();
    for (&n, &y) in data.sizes.iter().zip(&data.estimates) {
        let g = model.gradient(p, n);
        jtj += g * g.transpose();
        jtr += g * (y - model.eval(p, n));
    }
    (jtj, jtr)
}

/// Levenberg–Marquardt fit of `model` to `data`.
pub fn fit(model: DriftModel, data: &DriftData, init: Option<[f64; 3]>) -> Result<FitResult> {
    if model == DriftModel::Bkt && data.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "logarithmic drift fit needs at least 4 sizes, got {}",
            data.len()
        )));
    }
    let n_min = data.sizes[0];
    let mut p = init.map(Vector3::from).unwrap_or_else(|| model.default_init(data));
    model.clamp(&mut p, n_min);
    let mut cost = rss(model, data, &p);
    if !cost.is_finite() {
        return Err(Error::InvalidParams("initial guess gives a non-finite residual".into()));
    }
    let mut history = vec![cost];
    let mut lambda = LAMBDA0;
    let mut converged = false;
    let mut iterations = 0;
    let scale = data.estimates.iter().map(|y| y * y).sum::<f64>().max(f64::MIN_POSITIVE);
    while iterations < MAX_ITER {
        iterations += 1;
        let (jtj, jtr) = normal_equations(model, data, &p);
        if jtr.amax() <= 1e-15 * jtj.diagonal().amax().sqrt() * scale.sqrt() || cost <= 1e-32 * scale {
            converged = true;
            break;
        }
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for i in 0..3 {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p + step;
            model.clamp(&mut trial, n_min);
            let trial_cost = rss(model, data, &trial);
            if trial_cost.is_finite() && trial_cost < cost {
                let small_step = (trial - p).amax() <= 1e-15 * (p.amax() + 1e-15);
                let small_gain = cost - trial_cost <= 1e-15 * cost;
                p = trial;
                cost = trial_cost;
                history.push(cost);
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if small_step || small_gain {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no descent direction left at machine precision
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            solver: "levenberg-marquardt",
            iterations,
            residual: cost.sqrt(),
        });
    }
    let (jtj, _) = normal_equations(model, data, &p);
    let cov = jtj.try_inverse().ok_or(Error::SingularJacobian)?;
    if cov.iter().any(|v| !v.is_finite()) || (0..3).any(|i| cov[(i, i)] < 0.0) {
        return Err(Error::SingularJacobian);
    }
    let dof = data.len().saturating_sub(3);
    let s2 = if dof == 0 { f64::INFINITY } else { cost / dof as f64 };
    let sigmas = [0, 1, 2].map(|i| if s2.is_infinite() { f64::INFINITY } else { (cov[(i, i)] * s2).sqrt() });
    Ok(FitResult {
        model,
        source: data.source,
        params: [p[0], p[1], p[2]],
        sigmas,
        rss: cost,
        residual_norm: cost.sqrt(),
        converged,
        iterations,
        n_points: data.len(),
        rss_history: history,
    })
}

pub fn fit_power(data: &DriftData, init: Option<[f64; 3]>) -> Result<FitResult> {
    fit(DriftModel::Power, data, init)
}

pub fn fit_bkt(data: &DriftData, init: Option<[f64; 3]>) -> Result<FitResult> {
    fit(DriftModel::Bkt, data, init)
}
