//! Finite-shot SWAP-test estimation of kernel entries.
//!
//! A SWAP test returns outcome 0 with probability `P₀ = (1 + k)/2`, where `k`
//! is the fidelity of the two input states. With `S` shots the count of zeros
//! is binomial and `k̂ = 2c/S − 1` is an unbiased estimator with variance
//! `(1 − k²)/S`. The circuit is not simulated gate by gate; the outcome
//! distribution is sampled directly.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel::{GramMatrix, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotConfig {
    pub shots: u64,
    pub master_seed: u64,
    /// Estimate the diagonal as well; a SWAP test does not know it is 1.
    pub sample_diagonal: bool,
}

impl ShotConfig {
    pub fn new(shots: u64, master_seed: u64) -> Result<Self> {
        if shots == 0 {
            return Err(Error::InvalidParams("shots must be >= 1".into()));
        }
        Ok(ShotConfig {
            shots,
            master_seed,
            sample_diagonal: true,
        })
    }

    pub fn skip_diagonal(self) -> Self {
        ShotConfig {
            sample_diagonal: false,
            ..self
        }
    }
}

/// Seed of the private random stream of entry (i, j), i ≤ j.
pub fn entry_seed(master_seed: u64, i: usize, j: usize) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"swap-entry");
    h.update(master_seed.to_le_bytes());
    h.update((i as u64).to_le_bytes());
    h.update((j as u64).to_le_bytes());
    h.finalize().into()
}

/// One SWAP-test estimate of a kernel entry with true value `k_true`.
pub fn sample_entry(k_true: f64, cfg: &ShotConfig, entry: (usize, usize)) -> Result<f64> {
    if !(0.0..=1.0).contains(&k_true) {
        return Err(Error::InvalidParams(format!("kernel value {k_true} outside [0, 1]")));
    }
    if cfg.shots == 0 {
        return Err(Error::InvalidParams("shots must be >= 1".into()));
    }
    let (i, j) = (entry.0.min(entry.1), entry.0.max(entry.1));
    let mut rng = ChaCha12Rng::from_seed(entry_seed(cfg.master_seed, i, j));
    let p0 = 0.5 * (1.0 + k_true);
    let count = Binomial::new(cfg.shots, p0)
        .map_err(|e| Error::InvalidParams(e.to_string()))?
        .sample(&mut rng);
    Ok(2.0 * count as f64 / cfg.shots as f64 - 1.0)
}

/// Independently sampled copy of an exact Gram matrix.
pub fn sample_gram(gram: &GramMatrix, cfg: &ShotConfig) -> Result<GramMatrix> {
    if !gram.provenance.is_exact() {
        return Err(Error::InvalidParams("Gram matrix is already sampled".into()));
    }
    let m = gram.len();
    let skip = usize::from(!cfg.sample_diagonal);
    let entries: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (i + skip..m).map(move |j| (i, j)))
        .collect();
    let sampled: Vec<f64> = entries
        .par_iter()
        .map(|&(i, j)| sample_entry(gram.get(i, j).clamp(0.0, 1.0), cfg, (i, j)))
        .collect::<Result<_>>()?;
    let mut values = gram.values().to_vec();
    for (&(i, j), v) in entries.iter().zip(sampled) {
        values[i * m + j] = v;
        values[j * m + i] = v;
    }
    let out = GramMatrix::new(
        gram.points.clone(),
        gram.kind,
        Provenance::SwapSampled {
            seed: cfg.master_seed,
            shots: cfg.shots,
        },
        values,
    )?;
    Ok(out)
}
