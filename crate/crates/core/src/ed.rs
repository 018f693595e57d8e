//! Ground states by exact diagonalization of the matrix-free Hamiltonian.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lanczos::{self, LanczosConfig};
use crate::model::{HamiltonianOperator, ModelParams, ParitySector};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 2000;
pub const DEFAULT_SEED: u64 = 0x5eed_1a2c_05;
pub const DEFAULT_GAP_STEPS: usize = 30;
const KRYLOV_DIM: usize = 100;
/// Weight of the random component mixed into a warm start.
const WARM_NOISE: f64 = 1e-3;
/// Memory allowed for the Krylov basis.
const KRYLOV_BYTES: usize = 1 << 30;

/// Which parity sector to diagonalize in.
///
/// `Auto` picks the even sector for Δ = 0, where it is the sector of the
/// closed-form Bogoliubov ground state, and the full space otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectorChoice {
    #[default]
    Auto,
    Full,
    Even,
    Odd,
}

impl SectorChoice {
    pub fn resolve(&self, params: &ModelParams) -> ParitySector {
        match self {
            SectorChoice::Auto if params.is_free_fermion() => ParitySector::Even,
            SectorChoice::Auto | SectorChoice::Full => ParitySector::Full,
            SectorChoice::Even => ParitySector::Even,
            SectorChoice::Odd => ParitySector::Odd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdOptions {
    /// Residual tolerance ‖Hψ − Eψ‖₂.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed of the Lanczos start vector.
    pub seed: u64,
    pub sector: SectorChoice,
    /// Lanczos steps spent on the deflated problem that estimates E₁; 0 skips it.
    pub gap_steps: usize,
}

impl Default for EdOptions {
    fn default() -> Self {
        EdOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            seed: DEFAULT_SEED,
            sector: SectorChoice::Auto,
            gap_steps: DEFAULT_GAP_STEPS,
        }
    }
}

impl EdOptions {
    pub fn with_tol(self, tol: f64) -> Self {
        EdOptions { tol, ..self }
    }

    pub fn with_sector(self, sector: SectorChoice) -> Self {
        EdOptions { sector, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundState {
    pub params: ModelParams,
    pub sector: ParitySector,
    /// Unit-norm real amplitudes over all 2^N basis states.
    pub amplitudes: Vec<f64>,
    pub energy: f64,
    /// E₁ − E₀ within the sector, an upper bound with diagnostic accuracy.
    /// Infinite when not estimated.
    pub gap: f64,
    pub degenerate: bool,
    pub residual: f64,
    pub iterations: usize,
}

fn start_vector(dim: usize, seed: u64, sector: ParitySector) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    sector.restrict(&v)
}

struct SectorSolution {
    energy: f64,
    vector: Vec<f64>,
    gap: f64,
    residual: f64,
    iterations: usize,
}

/// Ground state within one parity sector, on the reduced basis.
fn solve_sector(
    op: &HamiltonianOperator,
    sector: ParitySector,
    opts: &EdOptions,
    guess: Option<&[f64]>,
) -> Result<SectorSolution> {
    let half = op.dim() / 2;
    let krylov_dim = KRYLOV_DIM.min((KRYLOV_BYTES / (8 * half)).max(8));
    let cfg = LanczosConfig {
        tol: opts.tol,
        max_iter: opts.max_iter,
        krylov_dim,
    };
    let mut start = start_vector(op.dim(), opts.seed, sector)?;
    if let Some(g) = guess {
        let g = sector.restrict(g)?;
        let (ng, ns) = (lanczos::norm(&g), lanczos::norm(&start));
        // a guess mostly outside this sector would only slow things down
        if ng > 0.1 {
            start.iter_mut().zip(&g).for_each(|(s, x)| *s = x / ng + WARM_NOISE * *s / ns);
        }
    }
    let res = lanczos::lowest_eigenpair(|v, out| op.apply_reduced_into(v, out, sector), start, &cfg)?;
    let gap = if opts.gap_steps > 0 {
        excited_estimate(op, sector, &res.vector, opts)? - res.eigenvalue
    } else {
        f64::INFINITY
    };
    Ok(SectorSolution {
        energy: res.eigenvalue,
        vector: res.vector,
        gap,
        residual: res.residual,
        iterations: res.iterations,
    })
}

/// Lowest eigenpair of `op` in the sector chosen by `opts`.
///
/// The full space is handled sector by sector: the Hamiltonian is block
/// diagonal in parity, so its ground state is the lower of the two sector
/// ground states, and the other one bounds the gap.
pub fn ground_state(op: &HamiltonianOperator, opts: &EdOptions) -> Result<GroundState> {
    ground_state_from(op, opts, None)
}

/// As [`ground_state`], starting Lanczos from `guess` (full-space amplitudes,
/// typically the ground state at a nearby parameter) plus a little seeded
/// noise. The result agrees with a cold start to within the tolerance.
pub fn ground_state_from(op: &HamiltonianOperator, opts: &EdOptions, guess: Option<&[f64]>) -> Result<GroundState> {
    if let Some(g) = guess {
        if g.len() != op.dim() {
            return Err(Error::DimensionMismatch {
                expected: op.dim(),
                got: g.len(),
            });
        }
    }
    if !(opts.tol > 0.0 && opts.tol <= 1e-4) {
        return Err(Error::InvalidParams(format!(
            "tolerance must lie in (0, 1e-4], got {}",
            opts.tol
        )));
    }
    let params = *op.params();
    let sector = opts.sector.resolve(&params);
    let (sol, found_in, iterations) = match sector {
        ParitySector::Full => {
            let even = solve_sector(op, ParitySector::Even, opts, guess)?;
            let odd = solve_sector(op, ParitySector::Odd, opts, guess)?;
            let iterations = even.iterations + odd.iterations;
            let (mut lo, hi, s) = if odd.energy < even.energy {
                (odd, even, ParitySector::Odd)
            } else {
                (even, odd, ParitySector::Even)
            };
            lo.gap = lo.gap.min(hi.energy - lo.energy);
            (lo, s, iterations)
        }
        s => {
            let sol = solve_sector(op, s, opts, guess)?;
            let it = sol.iterations;
            (sol, s, it)
        }
    };
    let degenerate = sol.gap < 1e-10 * sol.energy.abs().max(1.0);
    Ok(GroundState {
        params,
        sector,
        amplitudes: found_in.embed(&sol.vector)?,
        energy: sol.energy,
        gap: sol.gap,
        degenerate,
        residual: sol.residual,
        iterations,
    })
}

/// Lowest Ritz value of H restricted to the complement of `ground`.
///
/// A Krylov space grown from one start vector holds a single direction of
/// each eigenspace, so the second Ritz value of the main run never sees an
/// exact degeneracy. Deflating the ground state does.
fn excited_estimate(
    op: &HamiltonianOperator,
    sector: ParitySector,
    ground: &[f64],
    opts: &EdOptions,
) -> Result<f64> {
    let mut start = start_vector(op.dim(), opts.seed.wrapping_add(1), sector)?;
    let c = lanczos::dot(ground, &start);
    start.iter_mut().zip(ground).for_each(|(s, g)| *s -= c * g);
    lanczos::ritz_estimate(
        |v, out| {
            op.apply_reduced_into(v, out, sector)?;
            let c = lanczos::dot(ground, out);
            out.iter_mut().zip(ground).for_each(|(o, g)| *o -= c * g);
            Ok(())
        },
        start,
        opts.gap_steps,
    )
}

/// Build the Hamiltonian for `params` and diagonalize it.
pub fn ground_state_for(params: &ModelParams, opts: &EdOptions) -> Result<GroundState> {
    ground_state_near(params, opts, None)
}

pub fn ground_state_near(params: &ModelParams, opts: &EdOptions, guess: Option<&[f64]>) -> Result<GroundState> {
    let op = crate::model::build_hamiltonian(params)?;
    ground_state_from(&op, opts, guess)
}

/// |⟨ψ_a|ψ_b⟩|²; insensitive to the global sign of either vector.
pub fn fidelity_ed(a: &GroundState, b: &GroundState) -> Result<f64> {
    if a.amplitudes.len() != b.amplitudes.len() {
        return Err(Error::DimensionMismatch {
            expected: a.amplitudes.len(),
            got: b.amplitudes.len(),
        });
    }
    let overlap = lanczos::dot(&a.amplitudes, &b.amplitudes);
    Ok((overlap * overlap).min(1.0))
}

const CACHE_MAGIC: &[u8; 8] = b"SPKNGSTA";
const CACHE_VERSION: u16 = 1;
const CACHE_HEADER: usize = 64;

fn sector_code(s: ParitySector) -> u8 {
    match s {
        ParitySector::Full => 0,
        ParitySector::Even => 1,
        ParitySector::Odd => 2,
    }
}

fn sector_from_code(c: u8) -> Result<ParitySector> {
    match c {
        0 => Ok(ParitySector::Full),
        1 => Ok(ParitySector::Even),
        2 => Ok(ParitySector::Odd),
        _ => Err(Error::Format(format!("unknown sector code {c}"))),
    }
}

/// On-disk store of ground-state vectors.
///
/// File layout: a 64-byte little-endian header
/// `magic[8] | version u16 | sector u8 | degenerate u8 | n_sites u32 |
/// gamma | delta | h | tol | energy | gap` (f64 each), then the 2^N amplitudes
/// as little-endian f64.
#[derive(Debug, Clone)]
pub struct StateCache {
    dir: PathBuf,
}

impl StateCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(StateCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(params: &ModelParams, opts: &EdOptions) -> String {
        let sector = opts.sector.resolve(params);
        let mut hasher = Sha256::new();
        hasher.update(params.gamma.to_le_bytes());
        hasher.update(params.delta.to_le_bytes());
        hasher.update(params.h.to_le_bytes());
        hasher.update((params.n_sites as u64).to_le_bytes());
        hasher.update(opts.tol.to_le_bytes());
        hasher.update([sector_code(sector)]);
        hasher.update(opts.seed.to_le_bytes());
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn path(&self, params: &ModelParams, opts: &EdOptions) -> PathBuf {
        self.dir.join(format!("gs-{}.bin", Self::key(params, opts)))
    }

    pub fn load(&self, params: &ModelParams, opts: &EdOptions) -> Result<Option<GroundState>> {
        let path = self.path(params, opts);
        if !path.exists() {
            return Ok(None);
        }
        let gs = read_state(&path)?;
        if gs.params != *params {
            return Err(Error::Format(format!(
                "cache entry {} holds different parameters",
                path.display()
            )));
        }
        Ok(Some(gs))
    }

    pub fn store(&self, gs: &GroundState, opts: &EdOptions) -> Result<PathBuf> {
        let path = self.path(&gs.params, opts);
        write_state(&path, gs, opts.tol)?;
        Ok(path)
    }

    /// Load from the cache or diagonalize and store.
    pub fn get_or_compute(&self, params: &ModelParams, opts: &EdOptions, guess: Option<&[f64]>) -> Result<GroundState> {
        if let Some(gs) = self.load(params, opts)? {
            return Ok(gs);
        }
        let gs = ground_state_near(params, opts, guess)?;
        self.store(&gs, opts)?;
        Ok(gs)
    }
}

pub fn write_state(path: &Path, gs: &GroundState, tol: f64) -> Result<()> {
    let mut buf = Vec::with_capacity(CACHE_HEADER + 8 * gs.amplitudes.len());
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.push(sector_code(gs.sector));
    buf.push(gs.degenerate as u8);
    buf.extend_from_slice(&(gs.params.n_sites as u32).to_le_bytes());
    for x in [gs.params.gamma, gs.params.delta, gs.params.h, tol, gs.energy, gs.gap] {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    debug_assert_eq!(buf.len(), CACHE_HEADER);
    for a in &gs.amplitudes {
        buf.extend_from_slice(&a.to_le_bytes());
    }
    let tmp = path.with_extension("tmp");
    fs::File::create(&tmp)?.write_all(&buf)?;
    fs::rename(tmp, path)?;
    Ok(())
}

fn f64_at(b: &[u8], off: usize) -> f64 {
    f64::from_le_bytes(b[off..off + 8].try_into().unwrap())
}

pub fn read_state(path: &Path) -> Result<GroundState> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < CACHE_HEADER || &bytes[..8] != CACHE_MAGIC {
        return Err(Error::Format(format!("{} is not a state file", path.display())));
    }
    let version = u16::from_le_bytes([bytes[8], bytes[9]]);
    if version != CACHE_VERSION {
        return Err(Error::Format(format!("unsupported state file version {version}")));
    }
    let sector = sector_from_code(bytes[10])?;
    let degenerate = bytes[11] != 0;
    let n_sites = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let params = ModelParams::new(f64_at(&bytes, 16), f64_at(&bytes, 24), f64_at(&bytes, 32), n_sites)?;
    let energy = f64_at(&bytes, 48);
    let gap = f64_at(&bytes, 56);
    let dim = params.dim();
    if bytes.len() != CACHE_HEADER + 8 * dim {
        return Err(Error::Format(format!(
            "state file {} truncated: {} bytes for N={}",
            path.display(),
            bytes.len(),
            n_sites
        )));
    }
    let amplitudes = bytes[CACHE_HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(GroundState {
        params,
        sector,
        amplitudes,
        energy,
        gap,
        degenerate,
        residual: f64::NAN,
        iterations: 0,
    })
}
