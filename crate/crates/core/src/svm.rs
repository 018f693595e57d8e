//! Kernel SVM on a precomputed Gram matrix.
//!
//! The dual `max Σα − ½ΣΣ αᵢαⱼyᵢyⱼKᵢⱼ` subject to `0 ≤ α ≤ C`, `Σαy = 0` is
//! solved by sequential minimal optimization with second-order working-set
//! selection, then polished by solving the KKT equations on the free set.
//! A large cap C stands in for the hard margin.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{FidelityKernel, GramMatrix, State};
use crate::model::{Control, ModelParams};

pub const DEFAULT_C: f64 = 1e6;
pub const DEFAULT_KKT_TOL: f64 = 1e-6;
/// Relative α below which a point is not a support vector.
pub const SV_THRESHOLD: f64 = 1e-8;
pub const BOUNDARY_TOL: f64 = 1e-8;
const TAU: f64 = 1e-12;

/// Training points with labels ±1 along one control axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    pub points: Vec<ModelParams>,
    pub labels: Vec<i8>,
    pub control: Control,
}

impl LabeledSet {
    pub fn new(points: Vec<ModelParams>, labels: Vec<i8>, control: Control) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: labels.len(),
            });
        }
        if labels.iter().any(|&y| y != 1 && y != -1) {
            return Err(Error::InvalidParams("labels must be -1 or +1".into()));
        }
        if !labels.contains(&1) || !labels.contains(&-1) {
            return Err(Error::InvalidParams("training set needs both classes".into()));
        }
        Ok(LabeledSet {
            points,
            labels,
            control,
        })
    }

    /// `per_side` evenly spaced points in each window; left is labelled −1.
    pub fn from_windows(
        base: &ModelParams,
        control: Control,
        left: (f64, f64),
        right: (f64, f64),
        per_side: usize,
    ) -> Result<Self> {
        if per_side == 0 {
            return Err(Error::InvalidParams("windows need at least one point".into()));
        }
        if !(left.0 <= left.1 && left.1 < right.0 && right.0 <= right.1) {
            return Err(Error::InvalidParams(format!(
                "windows must be ordered and disjoint, got [{}, {}] and [{}, {}]",
                left.0, left.1, right.0, right.1
            )));
        }
        let mut points = Vec::with_capacity(2 * per_side);
        for &x in crate::linspace(left.0, left.1, per_side).iter() {
            points.push(base.with_control(control, x));
        }
        for &x in crate::linspace(right.0, right.1, per_side).iter() {
            points.push(base.with_control(control, x));
        }
        let labels = std::iter::repeat(-1).take(per_side).chain(std::iter::repeat(1).take(per_side)).collect();
        Self::new(points, labels, control)
    }

    /// `count` uniform draws on `range`, labelled by the sign of `x − threshold`
    /// and sorted along the axis.
    pub fn random_uniform(
        base: &ModelParams,
        control: Control,
        range: (f64, f64),
        threshold: f64,
        count: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs: Vec<f64> = (0..count).map(|_| rng.random_range(range.0..range.1)).collect();
        xs.sort_by(f64::total_cmp);
        let points = xs.iter().map(|&x| base.with_control(control, x)).collect();
        let labels = xs.iter().map(|&x| if x < threshold { -1 } else { 1 }).collect();
        Self::new(points, labels, control)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.points[i].control_value(self.control)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    /// Maximal KKT violation m(α) − M(α) at exit.
    pub kkt_gap: f64,
    /// Dual objective after every sweep of M pair updates, and at exit.
    pub objective_history: Vec<f64>,
    pub polished: bool,
    /// Smallest Gram eigenvalue, recorded when the matrix is not exact.
    pub min_eigenvalue: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub alphas: Vec<f64>,
    pub labels: Vec<i8>,
    pub bias: f64,
    pub sv_index: Vec<usize>,
    pub c: f64,
    pub points: Vec<ModelParams>,
    pub control: Control,
    pub objective: f64,
    pub diagnostics: SolverDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub c: f64,
    pub kkt_tol: f64,
    pub max_iter: usize,
    pub polish: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            c: DEFAULT_C,
            kkt_tol: DEFAULT_KKT_TOL,
            max_iter: 10_000_000,
            polish: true,
        }
    }
}

/// Dual objective Σα − ½ αᵀQα.
pub fn dual_objective(k: &GramMatrix, labels: &[i8], alphas: &[f64]) -> f64 {
    let m = alphas.len();
    let mut quad = 0.0;
    for i in 0..m {
        if alphas[i] == 0.0 {
            continue;
        }
        for j in 0..m {
            quad += alphas[i] * alphas[j] * f64::from(labels[i] * labels[j]) * k.get(i, j);
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

struct Smo<'a> {
    k: &'a GramMatrix,
    y: Vec<f64>,
    c: f64,
    alpha: Vec<f64>,
    /// ∇f = Qα − 1 of the minimization form.
    grad: Vec<f64>,
}

impl Smo<'_> {
    fn q(&self, i: usize, j: usize) -> f64 {
        self.y[i] * self.y[j] * self.k.get(i, j)
    }

    fn in_up(&self, t: usize) -> bool {
        (self.y[t] > 0.0 && self.alpha[t] < self.c) || (self.y[t] < 0.0 && self.alpha[t] > 0.0)
    }

    fn in_low(&self, t: usize) -> bool {
        (self.y[t] > 0.0 && self.alpha[t] > 0.0) || (self.y[t] < 0.0 && self.alpha[t] < self.c)
    }

    /// Working pair and the current KKT gap.
    fn select(&self) -> (Option<(usize, usize)>, f64) {
        let m = self.alpha.len();
        let mut gmax = f64::NEG_INFINITY;
        let mut i_best = None;
        for t in 0..m {
            if self.in_up(t) {
                let v = -self.y[t] * self.grad[t];
                if v > gmax {
                    gmax = v;
                    i_best = Some(t);
                }
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j_best = None;
        let mut obj_min = f64::INFINITY;
        for t in 0..m {
            if !self.in_low(t) {
                continue;
            }
            let v = -self.y[t] * self.grad[t];
            gmin = gmin.min(v);
            if let Some(i) = i_best {
                let b = gmax - v;
                if b > 0.0 {
                    let mut a = self.k.get(i, i) + self.k.get(t, t) - 2.0 * self.k.get(i, t);
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let o = -(b * b) / a;
                    if o < obj_min {
                        obj_min = o;
                        j_best = Some(t);
                    }
                }
            }
        }
        let gap = gmax - gmin;
        match (i_best, j_best) {
            (Some(i), Some(j)) => (Some((i, j)), gap),
            _ => (None, if gap.is_finite() { gap } else { 0.0 }),
        }
    }

    fn update(&mut self, i: usize, j: usize) {
        let (yi, yj) = (self.y[i], self.y[j]);
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let c = self.c;
        let mut a = self.k.get(i, i) + self.k.get(j, j) - 2.0 * self.k.get(i, j);
        if a <= 0.0 {
            a = TAU;
        }
        if yi != yj {
            let delta = (-self.grad[i] - self.grad[j]) / a;
            let diff = old_i - old_j;
            let mut ai = old_i + delta;
            let mut aj = old_j + delta;
            if diff > 0.0 && aj < 0.0 {
                aj = 0.0;
                ai = diff;
            } else if diff <= 0.0 && ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 && ai > c {
                ai = c;
                aj = c - diff;
            } else if diff <= 0.0 && aj > c {
                aj = c;
                ai = c + diff;
            }
            self.alpha[i] = ai;
            self.alpha[j] = aj;
        } else {
            let delta = (self.grad[i] - self.grad[j]) / a;
            let sum = old_i + old_j;
            let mut ai = old_i - delta;
            let mut aj = old_j + delta;
            if sum > c && ai > c {
                ai = c;
                aj = sum - c;
            } else if sum <= c && aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c && aj > c {
                aj = c;
                ai = sum - c;
            } else if sum <= c && ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
            self.alpha[i] = ai;
            self.alpha[j] = aj;
        }
        let (di, dj) = (self.alpha[i] - old_i, self.alpha[j] - old_j);
        for t in 0..self.alpha.len() {
            self.grad[t] += self.q(t, i) * di + self.q(t, j) * dj;
        }
    }
}

/// Solve y_i d(x_i) = 1 on the free support vectors together with Σαy = 0.
/// Returns None when the system is singular or the solution leaves the box.
fn polish(k: &GramMatrix, y: &[f64], alphas: &[f64], c: f64) -> Option<Vec<f64>> {
    let amax = alphas.iter().copied().fold(0.0, f64::max);
    let free: Vec<usize> = (0..alphas.len())
        .filter(|&i| alphas[i] > SV_THRESHOLD * amax && alphas[i] < c)
        .collect();
    if free.is_empty() || free.len() != alphas.iter().filter(|&&a| a > SV_THRESHOLD * amax).count() {
        return None;
    }
    let f = free.len();
    let mut a = DMatrix::zeros(f + 1, f + 1);
    let mut rhs = DVector::zeros(f + 1);
    for (r, &i) in free.iter().enumerate() {
        for (s, &j) in free.iter().enumerate() {
            a[(r, s)] = y[i] * y[j] * k.get(i, j);
        }
        a[(r, f)] = y[i];
        a[(f, r)] = y[i];
        rhs[r] = 1.0;
    }
    let sol = a.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut out = vec![0.0; alphas.len()];
    for (r, &i) in free.iter().enumerate() {
        if !(sol[r] > 0.0 && sol[r] < c) {
            return None;
        }
        out[i] = sol[r];
    }
    Some(out)
}

/// Bias averaged over the support vectors.
fn sv_bias(k: &GramMatrix, y: &[f64], alphas: &[f64], sv: &[usize]) -> f64 {
    let total: f64 = sv
        .iter()
        .map(|&kk| y[kk] - sv.iter().map(|&i| alphas[i] * y[i] * k.get(i, kk)).sum::<f64>())
        .sum();
    total / sv.len() as f64
}

fn support_vectors(alphas: &[f64]) -> Vec<usize> {
    let amax = alphas.iter().copied().fold(0.0, f64::max);
    (0..alphas.len()).filter(|&i| alphas[i] > SV_THRESHOLD * amax).collect()
}

/// Train with [`DEFAULT_C`] and default tolerances.
pub fn train(k: &GramMatrix, data: &LabeledSet) -> Result<SvmModel> {
    train_with(k, data, &TrainOptions::default())
}

pub fn train_with(k: &GramMatrix, data: &LabeledSet, opts: &TrainOptions) -> Result<SvmModel> {
    let m = data.len();
    if k.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: k.len(),
        });
    }
    if k.points != data.points {
        return Err(Error::InvalidParams("Gram matrix and training set list different points".into()));
    }
    if !(opts.c > 0.0) {
        return Err(Error::InvalidParams(format!("C must be positive, got {}", opts.c)));
    }
    let min_eigenvalue = if k.provenance.is_exact() {
        None
    } else {
        let ev = k.min_eigenvalue();
        if ev < 0.0 {
            log::warn!("training on an indefinite Gram matrix, min eigenvalue {ev:.3e}");
        }
        Some(ev)
    };
    let y: Vec<f64> = data.labels.iter().map(|&l| f64::from(l)).collect();
    let mut smo = Smo {
        k,
        y: y.clone(),
        c: opts.c,
        alpha: vec![0.0; m],
        grad: vec![-1.0; m],
    };
    let mut history = vec![0.0];
    let mut iterations = 0usize;
    let kkt_gap = loop {
        let (pair, gap) = smo.select();
        let Some((i, j)) = pair.filter(|_| gap >= opts.kkt_tol) else {
            break gap;
        };
        if iterations >= opts.max_iter {
            return Err(Error::NotConverged {
                solver: "smo",
                iterations,
                residual: gap,
            });
        }
        smo.update(i, j);
        iterations += 1;
        if iterations % m == 0 {
            history.push(dual_objective(k, &data.labels, &smo.alpha));
        }
    };
    let mut alphas = smo.alpha;
    let mut objective = dual_objective(k, &data.labels, &alphas);
    history.push(objective);
    let mut polished = false;
    if opts.polish {
        if let Some(p) = polish(k, &y, &alphas, opts.c) {
            let obj = dual_objective(k, &data.labels, &p);
            if obj >= objective - 1e-12 * objective.abs().max(1.0) && kkt_holds(k, &y, &p, opts.kkt_tol) {
                alphas = p;
                objective = obj;
                polished = true;
            }
        }
    }
    let sv_index = support_vectors(&alphas);
    let bias = sv_bias(k, &y, &alphas, &sv_index);
    Ok(SvmModel {
        alphas,
        labels: data.labels.clone(),
        bias,
        sv_index,
        c: opts.c,
        points: data.points.clone(),
        control: data.control,
        objective,
        diagnostics: SolverDiagnostics {
            iterations,
            kkt_gap,
            objective_history: history,
            polished,
            min_eigenvalue,
        },
    })
}

/// Non-support vectors must sit outside the margin.
fn kkt_holds(k: &GramMatrix, y: &[f64], alphas: &[f64], tol: f64) -> bool {
    let sv = support_vectors(alphas);
    let b = sv_bias(k, y, alphas, &sv);
    (0..alphas.len()).all(|t| {
        let d: f64 = sv.iter().map(|&i| alphas[i] * y[i] * k.get(i, t)).sum::<f64>() + b;
        alphas[t] > 0.0 || y[t] * d >= 1.0 - tol
    })
}

impl SvmModel {
    pub fn x(&self, i: usize) -> f64 {
        self.points[i].control_value(self.control)
    }

    /// Σαy over all points; zero at feasibility.
    pub fn dual_residual(&self) -> f64 {
        self.alphas.iter().zip(&self.labels).map(|(a, &y)| a * f64::from(y)).sum()
    }

    /// d from the kernel values between `x` and every training point.
    pub fn decision_from_row(&self, row: &[f64]) -> f64 {
        self.sv_index
            .iter()
            .map(|&i| self.alphas[i] * f64::from(self.labels[i]) * row[i])
            .sum::<f64>()
            + self.bias
    }

    /// Decision values on the training points.
    pub fn training_decisions(&self, k: &GramMatrix) -> Vec<f64> {
        (0..self.points.len()).map(|t| self.decision_from_row(k.row(t))).collect()
    }

    /// Evaluator of d(x) that holds the support-vector states.
    pub fn decision_function<'a>(&'a self, kernel: &'a FidelityKernel) -> Result<DecisionFunction<'a>> {
        let sv_states = self
            .sv_index
            .iter()
            .map(|&i| kernel.state(&self.points[i]))
            .collect::<Result<_>>()?;
        Ok(DecisionFunction {
            model: self,
            kernel,
            sv_states,
        })
    }

    pub fn decision(&self, kernel: &FidelityKernel, x: &ModelParams) -> Result<f64> {
        self.decision_function(kernel)?.at(x)
    }

    /// Largest-α support vector of each class, ties broken toward the inner
    /// window endpoint. The flag is set when another support vector of the
    /// same class carries at least half the dominant α.
    pub fn dominant_svs(&self) -> Option<(usize, usize, bool)> {
        let pick = |label: i8| -> Option<(usize, bool)> {
            let idx: Vec<usize> = self.sv_index.iter().copied().filter(|&i| self.labels[i] == label).collect();
            let inner = |i: usize| if label < 0 { self.x(i) } else { -self.x(i) };
            let best = *idx.iter().max_by(|&&a, &&b| {
                self.alphas[a]
                    .total_cmp(&self.alphas[b])
                    .then(inner(a).total_cmp(&inner(b)))
            })?;
            let ambiguous = idx.iter().any(|&i| i != best && self.alphas[i] >= 0.5 * self.alphas[best]);
            Some((best, ambiguous))
        };
        let (l, al) = pick(-1)?;
        let (r, ar) = pick(1)?;
        Some((l, r, al || ar))
    }
}

pub struct DecisionFunction<'a> {
    model: &'a SvmModel,
    kernel: &'a FidelityKernel,
    sv_states: Vec<State>,
}

impl DecisionFunction<'_> {
    pub fn at_state(&self, s: &State) -> Result<f64> {
        let mut d = self.model.bias;
        for (&i, sv) in self.model.sv_index.iter().zip(&self.sv_states) {
            d += self.model.alphas[i] * f64::from(self.model.labels[i]) * self.kernel.value(sv, s)?;
        }
        Ok(d)
    }

    pub fn at(&self, x: &ModelParams) -> Result<f64> {
        self.at_state(&self.kernel.state(x)?)
    }

    /// d along the model's control axis, other parameters from the first training point.
    pub fn at_control(&self, x: f64) -> Result<f64> {
        let p = self.model.points[0].with_control(self.model.control, x);
        self.at(&p)
    }
}

/// Root of `f` in `[lo, hi]` by bisection until the bracket is ≤ `tol` wide.
pub fn bisect<F: FnMut(f64) -> Result<f64>>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    let mut flo = f(lo)?;
    let fhi = f(hi)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return Err(Error::NoSignChange { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Zero crossing of the decision function inside `bracket`.
pub fn boundary(model: &SvmModel, kernel: &FidelityKernel, bracket: (f64, f64)) -> Result<f64> {
    let d = model.decision_function(kernel)?;
    bisect(|x| d.at_control(x), bracket.0, bracket.1, BOUNDARY_TOL)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidpointDiagnostics {
    pub x_left: f64,
    pub x_right: f64,
    pub alpha_left: f64,
    pub alpha_right: f64,
    pub grid: Vec<f64>,
    pub similarity_left: Vec<f64>,
    pub similarity_right: Vec<f64>,
    /// Point where both similarity curves cross.
    pub x_mid: f64,
    /// More than one comparable support vector on a side.
    pub ambiguous: bool,
}

/// Similarity curves to the two dominant support vectors and their balance point.
pub fn midpoint_diagnostics(model: &SvmModel, kernel: &FidelityKernel, grid: &[f64]) -> Result<MidpointDiagnostics> {
    let (l, r, ambiguous) = model
        .dominant_svs()
        .ok_or_else(|| Error::InvalidParams("model lacks support vectors of both classes".into()))?;
    let sl = kernel.state(&model.points[l])?;
    let sr = kernel.state(&model.points[r])?;
    let base = model.points[0];
    let curves = |x: f64| -> Result<(f64, f64)> {
        let s = kernel.state(&base.with_control(model.control, x))?;
        Ok((kernel.value(&sl, &s)?, kernel.value(&sr, &s)?))
    };
    let mut similarity_left = Vec::with_capacity(grid.len());
    let mut similarity_right = Vec::with_capacity(grid.len());
    for &x in grid {
        let (a, b) = curves(x)?;
        similarity_left.push(a);
        similarity_right.push(b);
    }
    let (xl, xr) = (model.x(l), model.x(r));
    let x_mid = bisect(
        |x| {
            let (a, b) = curves(x)?;
            Ok(a - b)
        },
        xl.min(xr),
        xl.max(xr),
        BOUNDARY_TOL,
    )?;
    Ok(MidpointDiagnostics {
        x_left: xl,
        x_right: xr,
        alpha_left: model.alphas[l],
        alpha_right: model.alphas[r],
        grid: grid.to_vec(),
        similarity_left,
        similarity_right,
        x_mid,
        ambiguous,
    })
}
