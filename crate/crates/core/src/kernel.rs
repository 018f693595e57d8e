//! Fidelity kernels, Gram matrices and nearest-neighbour fidelity scans.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ed::{self, EdOptions, GroundState, StateCache};
use crate::error::{Error, Result};
use crate::freefermion::{self, BogoliubovState};
use crate::model::{Control, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// K = F = |⟨ψ(x)|ψ(x')⟩|².
    #[default]
    #[serde(alias = "global-fidelity")]
    Global,
    /// K = F^{1/N}.
    PerSite,
}

impl KernelKind {
    pub fn apply(&self, fidelity: f64, n_sites: usize) -> f64 {
        match self {
            KernelKind::Global => fidelity,
            KernelKind::PerSite if fidelity <= 0.0 => 0.0,
            KernelKind::PerSite => fidelity.powf(1.0 / n_sites as f64),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Global => "global",
            KernelKind::PerSite => "per-site",
        }
    }
}

/// How ground states are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "lowercase")]
pub enum Engine {
    /// Closed-form Bogoliubov angles; Δ = 0 only.
    Analytic,
    /// Lanczos exact diagonalization.
    Ed(EdOptions),
}

impl Engine {
    pub fn ed() -> Self {
        Engine::Ed(EdOptions::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Engine::Analytic => "analytic",
            Engine::Ed(_) => "ed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum Provenance {
    Analytic,
    Ed,
    SwapSampled { seed: u64, shots: u64 },
}

impl Provenance {
    pub fn is_exact(&self) -> bool {
        !matches!(self, Provenance::SwapSampled { .. })
    }
}

/// A ground state from either engine.
#[derive(Debug, Clone)]
pub enum State {
    Bogoliubov(BogoliubovState),
    Amplitudes(GroundState),
}

impl State {
    pub fn params(&self) -> &ModelParams {
        match self {
            State::Bogoliubov(s) => &s.params,
            State::Amplitudes(s) => &s.params,
        }
    }

    pub fn fidelity(&self, other: &State) -> Result<f64> {
        match (self, other) {
            (State::Bogoliubov(a), State::Bogoliubov(b)) => a.fidelity(b),
            (State::Amplitudes(a), State::Amplitudes(b)) => ed::fidelity_ed(a, b),
            _ => Err(Error::EngineMismatch(
                "fidelity between closed-form and ED states".into(),
            )),
        }
    }
}

/// A kernel function: engine, kind and an optional on-disk state cache.
#[derive(Debug, Clone)]
pub struct FidelityKernel {
    pub engine: Engine,
    pub kind: KernelKind,
    pub cache: Option<StateCache>,
}

impl FidelityKernel {
    pub fn new(engine: Engine, kind: KernelKind) -> Self {
        FidelityKernel {
            engine,
            kind,
            cache: None,
        }
    }

    pub fn with_cache(mut self, cache: StateCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn provenance(&self) -> Provenance {
        match self.engine {
            Engine::Analytic => Provenance::Analytic,
            Engine::Ed(_) => Provenance::Ed,
        }
    }

    pub fn state(&self, params: &ModelParams) -> Result<State> {
        self.state_near(params, None)
    }

    /// As [`state`](Self::state); an ED run starts from `near` when it is a
    /// state of the same chain length.
    pub fn state_near(&self, params: &ModelParams, near: Option<&State>) -> Result<State> {
        match &self.engine {
            Engine::Analytic => {
                if !params.is_free_fermion() {
                    return Err(Error::EngineMismatch(format!(
                        "analytic engine needs delta = 0, got {}",
                        params.delta
                    )));
                }
                Ok(State::Bogoliubov(freefermion::bogoliubov_state(params)?))
            }
            Engine::Ed(opts) => {
                let guess = match near {
                    Some(State::Amplitudes(g)) if g.params.n_sites == params.n_sites => Some(g.amplitudes.as_slice()),
                    _ => None,
                };
                let gs = match &self.cache {
                    Some(cache) => cache.get_or_compute(params, opts, guess)?,
                    None => ed::ground_state_near(params, opts, guess)?,
                };
                if gs.degenerate {
                    log::warn!(
                        "degenerate ground state at gamma={} delta={} h={} N={} (gap {:.3e})",
                        params.gamma,
                        params.delta,
                        params.h,
                        params.n_sites,
                        gs.gap
                    );
                }
                Ok(State::Amplitudes(gs))
            }
        }
    }

    /// States for all points. Closed-form states are built in parallel; ED
    /// runs one point at a time, each warm-started from the previous one.
    pub fn states(&self, points: &[ModelParams]) -> Result<Vec<State>> {
        match self.engine {
            Engine::Analytic => points.par_iter().map(|p| self.state(p)).collect(),
            Engine::Ed(_) => {
                let mut out: Vec<State> = Vec::with_capacity(points.len());
                for p in points {
                    let s = self.state_near(p, out.last())?;
                    out.push(s);
                }
                Ok(out)
            }
        }
    }

    pub fn value(&self, a: &State, b: &State) -> Result<f64> {
        Ok(self.kind.apply(a.fidelity(b)?, a.params().n_sites))
    }

    pub fn evaluate(&self, a: &ModelParams, b: &ModelParams) -> Result<f64> {
        self.value(&self.state(a)?, &self.state(b)?)
    }

    pub fn gram(&self, points: &[ModelParams]) -> Result<GramMatrix> {
        check_points(points, &self.engine)?;
        let states = self.states(points)?;
        let m = points.len();
        let pairs: Vec<(usize, usize)> = (0..m)
            .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
            .collect();
        let upper: Vec<f64> = pairs
            .par_iter()
            .map(|&(i, j)| self.value(&states[i], &states[j]))
            .collect::<Result<_>>()?;
        let mut values = vec![0.0; m * m];
        for i in 0..m {
            values[i * m + i] = 1.0;
        }
        for (&(i, j), v) in pairs.iter().zip(upper) {
            values[i * m + j] = v;
            values[j * m + i] = v;
        }
        GramMatrix::new(points.to_vec(), self.kind, self.provenance(), values)
    }

    /// K(x_i, x) for every state in `basis`.
    pub fn row(&self, basis: &[State], x: &ModelParams) -> Result<Vec<f64>> {
        let sx = self.state(x)?;
        basis.iter().map(|s| self.value(s, &sx)).collect()
    }
}

fn check_points(points: &[ModelParams], engine: &Engine) -> Result<()> {
    let Some(first) = points.first() else {
        return Err(Error::InvalidParams("no points".into()));
    };
    for p in points {
        p.validate()?;
        if p.n_sites != first.n_sites {
            return Err(Error::InvalidParams(format!(
                "points mix N={} and N={}",
                first.n_sites, p.n_sites
            )));
        }
        if matches!(engine, Engine::Analytic) && (p.delta != 0.0 || p.gamma != first.gamma) {
            return Err(Error::EngineMismatch(
                "analytic engine needs delta = 0 and a shared gamma".into(),
            ));
        }
    }
    Ok(())
}

/// Gram matrix over `points` with the given kernel kind and engine.
pub fn gram(points: &[ModelParams], kind: KernelKind, engine: Engine) -> Result<GramMatrix> {
    FidelityKernel::new(engine, kind).gram(points)
}

/// Symmetric M×M matrix of kernel values, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    pub points: Vec<ModelParams>,
    pub kind: KernelKind,
    pub provenance: Provenance,
    values: Vec<f64>,
}

impl GramMatrix {
    pub fn new(
        points: Vec<ModelParams>,
        kind: KernelKind,
        provenance: Provenance,
        values: Vec<f64>,
    ) -> Result<Self> {
        let m = points.len();
        if values.len() != m * m {
            return Err(Error::DimensionMismatch {
                expected: m * m,
                got: values.len(),
            });
        }
        for i in 0..m {
            for j in i + 1..m {
                if values[i * m + j] != values[j * m + i] {
                    return Err(Error::Format(format!("Gram matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(GramMatrix {
            points,
            kind,
            provenance,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.len();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entries with i < j, or i ≤ j when `include_diagonal`, in row order.
    pub fn upper_triangle(&self, include_diagonal: bool) -> Vec<f64> {
        let m = self.len();
        let skip = usize::from(!include_diagonal);
        (0..m)
            .flat_map(|i| (i + skip..m).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.len(), &self.values)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.to_dmatrix()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(f64::NAN)
    }

    /// Feature-space distance between points i and j.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        distance(self.get(i, j))
    }

    /// Same matrix with the per-site transform applied entrywise.
    pub fn to_per_site(&self) -> Result<GramMatrix> {
        if self.kind == KernelKind::PerSite {
            return Ok(self.clone());
        }
        let n = self.points.first().map(|p| p.n_sites).unwrap_or(1);
        let values = self.values.iter().map(|&f| KernelKind::PerSite.apply(f, n)).collect();
        GramMatrix::new(self.points.clone(), KernelKind::PerSite, self.provenance, values)
    }
}

/// D = sqrt(2(1 − K)), the distance between unit feature vectors with overlap K.
pub fn distance(k: f64) -> f64 {
    (2.0 * (1.0 - k)).max(0.0).sqrt()
}

/// Nearest-neighbour fidelities F(x, x + δx) along one control axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityScan {
    pub base: ModelParams,
    pub control: Control,
    pub kind: KernelKind,
    pub grid: Vec<f64>,
    pub step: f64,
    pub fidelities: Vec<f64>,
    pub argmin: f64,
    pub argmin_index: usize,
}

fn state_key(x: f64) -> i64 {
    (x * 1e12).round() as i64
}

/// F(x, x + δx) at every grid point. States are shared between grid points
/// that coincide with shifted points to within 1e-12.
pub fn fidelity_scan(
    base: &ModelParams,
    control: Control,
    grid: &[f64],
    step: f64,
    kernel: &FidelityKernel,
) -> Result<FidelityScan> {
    if grid.is_empty() {
        return Err(Error::InvalidParams("empty scan grid".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParams("scan grid must be strictly increasing".into()));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidParams(format!("scan step must be positive, got {step}")));
    }
    let mut xs: Vec<f64> = grid.iter().chain(grid.iter().map(|x| x + step).collect::<Vec<_>>().iter()).copied().collect();
    // ascending order lets each ED run start from its neighbour
    xs.sort_by(f64::total_cmp);
    xs.dedup_by_key(|x| state_key(*x));
    let index: HashMap<i64, usize> = xs.iter().enumerate().map(|(i, &x)| (state_key(x), i)).collect();
    let points: Vec<ModelParams> = xs.iter().map(|&x| base.with_control(control, x)).collect();
    let states = kernel.states(&points)?;
    let fidelities: Vec<f64> = grid
        .iter()
        .map(|&x| {
            let a = &states[index[&state_key(x)]];
            let b = &states[index[&state_key(x + step)]];
            kernel.value(a, b)
        })
        .collect::<Result<_>>()?;
    let argmin_index = fidelities
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(FidelityScan {
        base: *base,
        control,
        kind: kernel.kind,
        grid: grid.to_vec(),
        step,
        argmin: grid[argmin_index],
        argmin_index,
        fidelities,
    })
}

impl FidelityScan {
    /// Rescan `argmin ± halfwidth` on a grid of the given spacing, keeping δx.
    pub fn refine(&self, spacing: f64, halfwidth: f64, kernel: &FidelityKernel) -> Result<FidelityScan> {
        if !(spacing > 0.0 && halfwidth >= spacing) {
            return Err(Error::InvalidParams(format!(
                "refinement needs 0 < spacing <= halfwidth, got {spacing}, {halfwidth}"
            )));
        }
        let n = (2.0 * halfwidth / spacing).round() as usize + 1;
        let lo = self.argmin - halfwidth;
        let grid: Vec<f64> = (0..n).map(|i| lo + spacing * i as f64).collect();
        fidelity_scan(&self.base, self.control, &grid, self.step, kernel)
    }
}

/// Training-free pseudo-critical estimate: the argmax over interior grid
/// points of |∂_h 𝒮(h, h_ref)|, with central differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkEstimate {
    pub h_c: f64,
    pub grid: Vec<f64>,
    pub similarity: Vec<f64>,
    pub derivative: Vec<f64>,
}

pub fn benchmark_critical(
    base: &ModelParams,
    h_ref: f64,
    grid: &[f64],
    kernel: &FidelityKernel,
) -> Result<BenchmarkEstimate> {
    if grid.len() < 3 {
        return Err(Error::InvalidParams(format!(
            "benchmark grid needs at least 3 points, got {}",
            grid.len()
        )));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParams("benchmark grid must be strictly increasing".into()));
    }
    let reference = kernel.state(&base.with_control(Control::Field, h_ref))?;
    let points: Vec<ModelParams> = grid.iter().map(|&h| base.with_control(Control::Field, h)).collect();
    let similarity: Vec<f64> = points
        .par_iter()
        .map(|p| kernel.value(&kernel.state(p)?, &reference))
        .collect::<Result<_>>()?;
    let mut derivative = vec![f64::NAN; grid.len()];
    let mut best = (0.0f64, 1usize);
    for i in 1..grid.len() - 1 {
        let d = (similarity[i + 1] - similarity[i - 1]) / (grid[i + 1] - grid[i - 1]);
        derivative[i] = d;
        if d.abs() > best.0 {
            best = (d.abs(), i);
        }
    }
    Ok(BenchmarkEstimate {
        h_c: grid[best.1],
        grid: grid.to_vec(),
        similarity,
        derivative,
    })
}
