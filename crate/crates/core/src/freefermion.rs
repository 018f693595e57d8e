//! Closed-form ground states of the XY family (Δ = 0).
//!
//! Jordan–Wigner maps the chain to free fermions; in the even-parity sector
//! the fermions obey antiperiodic boundary conditions and the ground state
//! factorizes over the `(q, -q)` pairs with momenta `q = (2m+1)π/N`. Each pair
//! is rotated by a Bogoliubov angle θ_q, so fidelities are products of
//! `cos²(Δθ_q)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Below this squared gap the angle derivative is treated as divergent.
pub const RESONANCE_EPS: f64 = 1e-300;

/// Positive antiperiodic momenta `(2m+1)π/N`, `m = 0..N/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumGrid {
    pub n_sites: usize,
    pub momenta: Vec<f64>,
}

impl MomentumGrid {
    pub fn new(n_sites: usize) -> Result<Self> {
        if n_sites < 2 || n_sites % 2 != 0 {
            return Err(Error::InvalidParams(format!(
                "momentum grid needs an even N, got {n_sites}"
            )));
        }
        let nf = n_sites as f64;
        let momenta = (0..n_sites / 2)
            .map(|m| (2 * m + 1) as f64 * PI / nf)
            .collect();
        Ok(MomentumGrid { n_sites, momenta })
    }
}

/// Bogoliubov angle of one mode, with `2θ = atan2(γ sin q, h − cos q) ∈ [0, π]`.
///
/// The two-argument form keeps 2θ continuous in h; a plain arctangent jumps
/// by π/2 in θ whenever `h` crosses `cos q`.
#[inline]
pub fn bogoliubov_angle(gamma: f64, h: f64, q: f64) -> f64 {
    0.5 * (gamma * q.sin()).atan2(h - q.cos())
}

/// Single-mode dispersion `ε_q = sqrt((h − cos q)² + γ² sin² q)`.
#[inline]
pub fn dispersion(gamma: f64, h: f64, q: f64) -> f64 {
    (h - q.cos()).hypot(gamma * q.sin())
}

/// Ground state of the XY chain in Bogoliubov-angle form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BogoliubovState {
    pub params: ModelParams,
    pub momenta: Vec<f64>,
    pub angles: Vec<f64>,
    pub dispersion: Vec<f64>,
}

fn require_free(params: &ModelParams) -> Result<()> {
    params.validate()?;
    if params.delta != 0.0 {
        return Err(Error::InvalidParams(format!(
            "closed-form states need delta = 0, got {}",
            params.delta
        )));
    }
    Ok(())
}

pub fn bogoliubov_state(params: &ModelParams) -> Result<BogoliubovState> {
    require_free(params)?;
    let grid = MomentumGrid::new(params.n_sites)?;
    let (gamma, h) = (params.gamma, params.h);
    let angles = grid
        .momenta
        .iter()
        .map(|&q| bogoliubov_angle(gamma, h, q))
        .collect();
    let dispersion = grid
        .momenta
        .iter()
        .map(|&q| dispersion(gamma, h, q))
        .collect();
    Ok(BogoliubovState {
        params: *params,
        momenta: grid.momenta,
        angles,
        dispersion,
    })
}

impl BogoliubovState {
    fn check_compatible(&self, other: &BogoliubovState) -> Result<()> {
        if self.params.n_sites != other.params.n_sites {
            return Err(Error::InvalidParams(format!(
                "fidelity between N={} and N={}",
                self.params.n_sites, other.params.n_sites
            )));
        }
        if self.params.gamma != other.params.gamma {
            return Err(Error::InvalidParams(format!(
                "closed-form fidelity needs equal gamma, got {} and {}",
                self.params.gamma, other.params.gamma
            )));
        }
        Ok(())
    }

    /// ln F, accumulated mode by mode.
    pub fn log_fidelity(&self, other: &BogoliubovState) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .angles
            .iter()
            .zip(&other.angles)
            .map(|(a, b)| {
                let c = (b - a).cos();
                (c * c).ln()
            })
            .sum())
    }

    /// F = Π_q cos²(θ_q(b) − θ_q(a)).
    pub fn fidelity(&self, other: &BogoliubovState) -> Result<f64> {
        if self.params.n_sites > 200 {
            return Ok(self.log_fidelity(other)?.exp());
        }
        self.check_compatible(other)?;
        Ok(self
            .angles
            .iter()
            .zip(&other.angles)
            .map(|(a, b)| {
                let c = (b - a).cos();
                c * c
            })
            .product())
    }

    /// Ground-state energy `−Σ_{q>0} 2ε_q`.
    pub fn energy(&self) -> f64 {
        -2.0 * self.dispersion.iter().sum::<f64>()
    }
}

/// Ground-state fidelity between two XY chains with equal N and γ.
pub fn fidelity_xy(a: &ModelParams, b: &ModelParams) -> Result<f64> {
    bogoliubov_state(a)?.fidelity(&bogoliubov_state(b)?)
}

/// ∂θ_q/∂h = −γ sin q / (2 E_q²).
pub fn theta_sensitivity(params: &ModelParams, q: f64) -> Result<f64> {
    let (gamma, h) = (params.gamma, params.h);
    let eps = h - q.cos();
    let pairing = gamma * q.sin();
    let e2 = eps * eps + pairing * pairing;
    if e2 < RESONANCE_EPS {
        return Err(Error::Resonance(e2));
    }
    Ok(-0.5 * pairing / e2)
}

/// Free-fermion ground-state energy, the sum form `−Σ_{q>0} 2ε_q`.
pub fn free_energy_sum(params: &ModelParams) -> Result<f64> {
    Ok(bogoliubov_state(params)?.energy())
}
