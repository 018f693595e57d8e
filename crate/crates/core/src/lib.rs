//! Fidelity-kernel support vector machines for quantum phase transitions of
//! anisotropic spin-1/2 chains, with SWAP-test shot-noise simulation and
//! measurement-budget bounds.
//!
//! The pipeline runs: ground states ([`freefermion`] in closed form for the XY
//! family, [`ed`] by Lanczos otherwise) → fidelity Gram matrices ([`kernel`])
//! → optional finite-shot sampling ([`swaptest`]) → hard-margin SVM and its
//! decision boundary ([`svm`]) → ensemble statistics and shot bounds
//! ([`resources`]) → finite-size drift fits ([`fss`]). [`pipeline`] wires the
//! stages together for batch runs.

pub mod config;
pub mod ed;
pub mod error;
pub mod freefermion;
pub mod fss;
pub mod io;
pub mod kernel;
mod lanczos;
pub mod model;
pub mod pipeline;
pub mod resources;
pub mod svm;
pub mod swaptest;

pub use ed::{fidelity_ed, ground_state, EdOptions, GroundState, SectorChoice};
pub use error::{Error, Result};
pub use freefermion::{bogoliubov_state, fidelity_xy, free_energy_sum, theta_sensitivity, BogoliubovState, MomentumGrid};
pub use kernel::{gram, Engine, FidelityScan, GramMatrix, KernelKind, Provenance};
pub use model::{build_hamiltonian, Control, HamiltonianOperator, ModelParams, ParitySector};
pub use resources::{ensemble_stats, kernel_histogram, shots_ca, shots_spread, EnsembleStats, ShotBounds};
pub use svm::{LabeledSet, SvmModel};
pub use swaptest::ShotConfig;

/// `n` evenly spaced values over `[start, stop]`, endpoints included.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => {
            let step = (stop - start) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { stop } else { start + step * i as f64 })
                .collect()
        }
    }
}
