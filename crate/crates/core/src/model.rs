//! Parameter space of the anisotropic spin-1/2 chain and its matrix-free Hamiltonian.
//!
//! The Hamiltonian on a periodic ring of `N` sites (energies in units of the
//! exchange coupling) is
//!
//! ```text
//! H = -Σ_i [ (1+γ)/2 σˣ_i σˣ_{i+1} + (1-γ)/2 σʸ_i σʸ_{i+1} + Δ σᶻ_i σᶻ_{i+1} ] - h Σ_i σᶻ_i
//! ```
//!
//! Basis convention: bit `b_i = 0` means `σᶻ_i = +1`, and site 1 is the least
//! significant bit of the basis index. All couplings are real, so states are
//! real vectors.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest chain handled by exact diagonalization unless overridden.
pub const DEFAULT_MAX_SITES: usize = 24;

/// Largest chain for which a dense matrix may be materialized.
pub const DENSE_MAX_SITES: usize = 12;

const PARALLEL_MIN_DIM: usize = 1 << 14;

/// A point in parameter space; the data point fed to the kernel SVM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// In-plane anisotropy γ ∈ [0, 1].
    pub gamma: f64,
    /// Longitudinal coupling Δ.
    pub delta: f64,
    /// Transverse field h ≥ 0.
    pub h: f64,
    /// Number of sites N (even, ≥ 4).
    pub n_sites: usize,
}

impl ModelParams {
    pub fn new(gamma: f64, delta: f64, h: f64, n_sites: usize) -> Result<Self> {
        let p = ModelParams {
            gamma,
            delta,
            h,
            n_sites,
        };
        p.validate()?;
        Ok(p)
    }

    /// Transverse-field Ising chain (γ = 1, Δ = 0).
    pub fn ising(h: f64, n_sites: usize) -> Result<Self> {
        Self::new(1.0, 0.0, h, n_sites)
    }

    /// Anisotropic XY chain (Δ = 0).
    pub fn xy(gamma: f64, h: f64, n_sites: usize) -> Result<Self> {
        Self::new(gamma, 0.0, h, n_sites)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 4 || self.n_sites % 2 != 0 {
            return Err(Error::InvalidParams(format!(
                "n_sites must be even and >= 4, got {}",
                self.n_sites
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidParams(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.h >= 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidParams(format!(
                "h must be finite and >= 0, got {}",
                self.h
            )));
        }
        if !self.delta.is_finite() {
            return Err(Error::InvalidParams("delta must be finite".into()));
        }
        Ok(())
    }

    /// True for the free-fermion (XY) family where closed-form states exist.
    pub fn is_free_fermion(&self) -> bool {
        self.delta == 0.0
    }

    pub fn with_control(&self, control: Control, x: f64) -> Self {
        let mut p = *self;
        match control {
            Control::Field => p.h = x,
            Control::Anisotropy => p.delta = x,
        }
        p
    }

    pub fn with_sites(&self, n_sites: usize) -> Self {
        ModelParams { n_sites, ..*self }
    }

    pub fn control_value(&self, control: Control) -> f64 {
        match control {
            Control::Field => self.h,
            Control::Anisotropy => self.delta,
        }
    }

    pub fn dim(&self) -> usize {
        1usize << self.n_sites
    }
}

/// The parameter swept across the transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Control {
    /// Transverse field h.
    #[serde(alias = "h")]
    Field,
    /// Longitudinal coupling Δ.
    #[serde(alias = "delta")]
    Anisotropy,
}

impl Control {
    pub fn symbol(&self) -> &'static str {
        match self {
            Control::Field => "h",
            Control::Anisotropy => "delta",
        }
    }
}

/// Fermion-parity sector, i.e. the eigenvalue of Π σᶻ.
///
/// Every term of the Hamiltonian flips spins in pairs, so the parity of the
/// number of down spins is conserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParitySector {
    #[default]
    Full,
    Even,
    Odd,
}

impl ParitySector {
    #[inline]
    pub fn contains(&self, index: usize) -> bool {
        match self {
            ParitySector::Full => true,
            ParitySector::Even => index.count_ones() % 2 == 0,
            ParitySector::Odd => index.count_ones() % 2 == 1,
        }
    }

    /// Index in the full basis of the `t`-th basis state of a parity
    /// sector. The lowest bit is fixed by the parity of the others.
    #[inline]
    fn expand(odd: bool, t: usize) -> usize {
        (t << 1) | ((t.count_ones() as usize & 1) ^ odd as usize)
    }

    fn is_odd(&self) -> Result<bool> {
        match self {
            ParitySector::Even => Ok(false),
            ParitySector::Odd => Ok(true),
            ParitySector::Full => Err(Error::InvalidParams(
                "the full space has no reduced basis".into(),
            )),
        }
    }

    /// Amplitudes over the sector basis, dropping the rest.
    pub fn restrict(&self, v: &[f64]) -> Result<Vec<f64>> {
        let odd = self.is_odd()?;
        Ok((0..v.len() / 2).map(|t| v[Self::expand(odd, t)]).collect())
    }

    /// Inverse of [`restrict`](Self::restrict), zero outside the sector.
    pub fn embed(&self, reduced: &[f64]) -> Result<Vec<f64>> {
        let odd = self.is_odd()?;
        let mut v = vec![0.0; 2 * reduced.len()];
        for (t, &x) in reduced.iter().enumerate() {
            v[Self::expand(odd, t)] = x;
        }
        Ok(v)
    }

    /// Zero every amplitude outside the sector.
    pub fn project(&self, v: &mut [f64]) {
        if *self == ParitySector::Full {
            return;
        }
        for (i, x) in v.iter_mut().enumerate() {
            if !self.contains(i) {
                *x = 0.0;
            }
        }
    }
}

/// Matrix-free Hamiltonian of the periodic chain.
///
/// Immutable after construction; [`apply_into`](Self::apply_into) only writes
/// to the caller's output buffer.
#[derive(Debug, Clone)]
pub struct HamiltonianOperator {
    params: ModelParams,
    dim: usize,
    bond_masks: Vec<usize>,
}

/// Build the operator with the default memory cap.
pub fn build_hamiltonian(params: &ModelParams) -> Result<HamiltonianOperator> {
    HamiltonianOperator::with_cap(params, DEFAULT_MAX_SITES)
}

impl HamiltonianOperator {
    pub fn with_cap(params: &ModelParams, max_sites: usize) -> Result<Self> {
        params.validate()?;
        if params.n_sites > max_sites {
            return Err(Error::TooLarge {
                n_sites: params.n_sites,
                cap: max_sites,
            });
        }
        let n = params.n_sites;
        let bond_masks = (0..n).map(|i| (1usize << i) | (1usize << ((i + 1) % n))).collect();
        Ok(HamiltonianOperator {
            params: *params,
            dim: 1usize << n,
            bond_masks,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Diagonal matrix element ⟨s|H|s⟩.
    #[inline]
    pub fn diagonal(&self, s: usize) -> f64 {
        let n = self.params.n_sites;
        let rotated = (s >> 1) | ((s & 1) << (n - 1));
        let anti_bonds = (s ^ rotated).count_ones() as f64;
        let down = s.count_ones() as f64;
        let nf = n as f64;
        -self.params.delta * (nf - 2.0 * anti_bonds) - self.params.h * (nf - 2.0 * down)
    }

    /// out = H·v.
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        self.apply_sector_into(v, out, ParitySector::Full)
    }

    /// out = P·H·v where P projects onto `sector`. When `v` already lies in
    /// the sector this equals H·v.
    pub fn apply_sector_into(
        &self,
        v: &[f64],
        out: &mut [f64],
        sector: ParitySector,
    ) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        if out.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: out.len(),
            });
        }
        // bond by bond over contiguous rows; the gathers v[s ^ mask] stay
        // within a few cache lines, which a row-by-row loop does not achieve
        let gamma = self.params.gamma;
        let fill = |offset: usize, chunk: &mut [f64]| {
            for (k, o) in chunk.iter_mut().enumerate() {
                let s = offset + k;
                *o = self.diagonal(s) * v[s];
            }
            for &mask in &self.bond_masks {
                let lo = mask.trailing_zeros();
                let hi = usize::BITS - 1 - mask.leading_zeros();
                for (k, o) in chunk.iter_mut().enumerate() {
                    let s = offset + k;
                    // equal spins on the bond: pair creation/annihilation, amplitude -γ;
                    // opposite spins: hopping, amplitude -1
                    let amp = if ((s >> lo) ^ (s >> hi)) & 1 == 1 { -1.0 } else { -gamma };
                    *o += amp * v[s ^ mask];
                }
            }
            if sector != ParitySector::Full {
                for (k, o) in chunk.iter_mut().enumerate() {
                    if !sector.contains(offset + k) {
                        *o = 0.0;
                    }
                }
            }
        };
        if self.dim >= PARALLEL_MIN_DIM {
            const CHUNK: usize = 1 << 12;
            out.par_chunks_mut(CHUNK)
                .enumerate()
                .for_each(|(c, chunk)| fill(c * CHUNK, chunk));
        } else {
            fill(0, out);
        }
        Ok(())
    }

    /// out = H·v on the basis of a single parity sector, which has half
    /// the dimension of the full space. See [`ParitySector::restrict`].
    pub fn apply_reduced_into(&self, v: &[f64], out: &mut [f64], sector: ParitySector) -> Result<()> {
        let odd = sector.is_odd()?;
        let half = self.dim / 2;
        for len in [v.len(), out.len()] {
            if len != half {
                return Err(Error::DimensionMismatch {
                    expected: half,
                    got: len,
                });
            }
        }
        let gamma = self.params.gamma;
        let amps = [-gamma, -1.0];
        // chunks are aligned powers of two, so the partners of a chunk under
        // one bond form another whole chunk
        let fill = |offset: usize, chunk: &mut [f64]| {
            let len = chunk.len();
            for (k, o) in chunk.iter_mut().enumerate() {
                let t = offset + k;
                *o = self.diagonal(ParitySector::expand(odd, t)) * v[t];
            }
            for &mask in &self.bond_masks {
                let lo = mask.trailing_zeros();
                let hi = usize::BITS - 1 - mask.leading_zeros();
                let partner = mask >> 1;
                let far = offset ^ (partner & !(len - 1));
                let near = partner & (len - 1);
                let src = &v[far..far + len];
                if lo == 0 {
                    for (k, o) in chunk.iter_mut().enumerate() {
                        let s = ParitySector::expand(odd, offset + k);
                        *o += amps[(s ^ (s >> hi)) & 1] * src[k ^ near];
                    }
                } else {
                    let (lo, hi) = (lo - 1, hi - 1);
                    for (k, o) in chunk.iter_mut().enumerate() {
                        let t = offset + k;
                        *o += amps[((t >> lo) ^ (t >> hi)) & 1] * src[k ^ near];
                    }
                }
            }
        };
        if half >= PARALLEL_MIN_DIM {
            const CHUNK: usize = 1 << 12;
            out.par_chunks_mut(CHUNK)
                .enumerate()
                .for_each(|(c, chunk)| fill(c * CHUNK, chunk));
        } else {
            fill(0, out);
        }
        Ok(())
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.apply_into(v, &mut out)?;
        Ok(out)
    }

    /// ⟨v|H|v⟩ / ⟨v|v⟩.
    pub fn rayleigh_quotient(&self, v: &[f64]) -> Result<f64> {
        let hv = self.apply(v)?;
        let num: f64 = v.iter().zip(&hv).map(|(a, b)| a * b).sum();
        let den: f64 = v.iter().map(|a| a * a).sum();
        Ok(num / den)
    }

    /// Dense matrix, only for small chains (oracle checks).
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        if self.params.n_sites > DENSE_MAX_SITES {
            return Err(Error::TooLarge {
                n_sites: self.params.n_sites,
                cap: DENSE_MAX_SITES,
            });
        }
        let mut m = DMatrix::zeros(self.dim, self.dim);
        let mut e = vec![0.0; self.dim];
        let mut col = vec![0.0; self.dim];
        for j in 0..self.dim {
            e[j] = 1.0;
            self.apply_into(&e, &mut col)?;
            e[j] = 0.0;
            for i in 0..self.dim {
                m[(i, j)] = col[i];
            }
        }
        Ok(m)
    }
}
