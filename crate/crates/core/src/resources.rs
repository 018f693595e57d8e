//! Ensemble statistics of Gram matrices and shot-count bounds.
//!
//! With `S` shots the SWAP estimator has variance `(1 − k²)/S`. Chebyshev's
//! inequality then gives the shots needed to resolve the ensemble spread
//! (`ε·IQR`) or to keep the estimate away from zero (`ε·k`) with probability
//! at least `P`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_CONFIDENCE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    /// Median kernel value.
    pub k_repr: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub count: usize,
    pub include_diagonal: bool,
}

/// Quantile by linear interpolation between order statistics (type 7).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn stats_of(values: &[f64], include_diagonal: bool) -> Result<EnsembleStats> {
    if values.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "ensemble statistics need at least 3 entries, got {}",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    Ok(EnsembleStats {
        k_repr: quantile(&sorted, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
        count: sorted.len(),
        include_diagonal,
    })
}

/// Median and quartiles of the upper-triangular Gram entries.
pub fn ensemble_stats(gram: &GramMatrix, include_diagonal: bool) -> Result<EnsembleStats> {
    stats_of(&gram.upper_triangle(include_diagonal), include_diagonal)
}

/// A real-valued shot bound with its integer ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotCount {
    pub value: f64,
    /// `None` when the ceiling exceeds 2⁶³ − 1.
    pub shots: Option<u64>,
}

impl ShotCount {
    fn new(value: f64) -> Self {
        let c = value.ceil();
        let shots = (c.is_finite() && c < 9.223_372_036_854_775_807e18).then_some(c as u64);
        ShotCount { value, shots }
    }

    pub fn is_feasible(&self) -> bool {
        self.shots.is_some()
    }

    pub fn display(&self) -> String {
        match self.shots {
            Some(s) => s.to_string(),
            None => "infeasible".into(),
        }
    }
}

fn check_eps_p(eps: f64, p: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParams(format!("epsilon must be positive, got {eps}")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParams(format!("confidence must lie in (0, 1), got {p}")));
    }
    Ok(())
}

/// (1 − k²) / ((1 − P) ε² IQR²).
pub fn shots_spread(stats: &EnsembleStats, epsilon: f64, p_spread: f64) -> Result<ShotCount> {
    check_eps_p(epsilon, p_spread)?;
    if stats.iqr <= 0.0 {
        return Err(Error::UnresolvableSpread);
    }
    let k = stats.k_repr;
    Ok(ShotCount::new(
        (1.0 - k * k) / ((1.0 - p_spread) * epsilon * epsilon * stats.iqr * stats.iqr),
    ))
}

/// (1 − k²) / ((1 − P) ε² k²).
pub fn shots_ca(stats: &EnsembleStats, epsilon: f64, p_ca: f64) -> Result<ShotCount> {
    check_eps_p(epsilon, p_ca)?;
    let k = stats.k_repr;
    if k == 0.0 {
        return Err(Error::ConcentratedKernel);
    }
    Ok(ShotCount::new((1.0 - k * k) / ((1.0 - p_ca) * epsilon * epsilon * k * k)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundParams {
    pub epsilon: f64,
    pub p_spread: f64,
    pub epsilon_ca: f64,
    pub p_ca: f64,
}

impl Default for BoundParams {
    fn default() -> Self {
        BoundParams {
            epsilon: DEFAULT_EPSILON,
            p_spread: DEFAULT_CONFIDENCE,
            epsilon_ca: DEFAULT_EPSILON,
            p_ca: DEFAULT_CONFIDENCE,
        }
    }
}

/// Both bounds for one ensemble. A divergent bound is reported as `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotBounds {
    pub s_spread: Option<ShotCount>,
    pub s_ca: Option<ShotCount>,
    pub params: BoundParams,
}

pub fn shot_bounds(stats: &EnsembleStats, params: &BoundParams) -> Result<ShotBounds> {
    let divergent = |r: Result<ShotCount>| match r {
        Ok(s) => Ok(Some(s)),
        Err(Error::UnresolvableSpread | Error::ConcentratedKernel) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(ShotBounds {
        s_spread: divergent(shots_spread(stats, params.epsilon, params.p_spread))?,
        s_ca: divergent(shots_ca(stats, params.epsilon_ca, params.p_ca))?,
        params: *params,
    })
}

/// Counts of upper-triangular entries in `bins` uniform bins on [0, 1].
/// Values outside the interval fall in the end bins.
pub fn kernel_histogram(gram: &GramMatrix, bins: usize) -> Result<Vec<u64>> {
    if bins < 2 {
        return Err(Error::InvalidParams(format!("histogram needs at least 2 bins, got {bins}")));
    }
    let mut counts = vec![0u64; bins];
    for v in gram.upper_triangle(false) {
        let b = ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(k: f64, iqr: f64) -> EnsembleStats {
        EnsembleStats {
            k_repr: k,
            q1: 0.0,
            q3: iqr,
            iqr,
            count: 10,
            include_diagonal: false,
        }
    }

    #[test]
    fn order_statistics() {
        let s = stats_of(&[0.5, 0.1, 0.4, 0.2, 0.3], false).unwrap();
        assert!((s.k_repr - 0.3).abs() < 1e-15);
        assert!((s.q1 - 0.2).abs() < 1e-15);
        assert!((s.q3 - 0.4).abs() < 1e-15);
        assert!((s.iqr - 0.2).abs() < 1e-15);
        assert!(stats_of(&[0.1, 0.2], false).is_err());
    }

    #[test]
    fn constant_ensemble() {
        let s = stats_of(&[0.7; 6], false).unwrap();
        assert_eq!((s.k_repr, s.iqr), (0.7, 0.0));
        assert!(matches!(shots_spread(&s, 1e-3, 0.99), Err(Error::UnresolvableSpread)));
    }

    #[test]
    fn spread_bound_values() {
        let s = shots_spread(&stats(0.0, 1.0), 1e-3, 0.99).unwrap();
        assert!((s.value / 1e8 - 1.0).abs() < 1e-12);
        assert_eq!(shots_spread(&stats(1.0, 0.3), 1e-3, 0.99).unwrap().value, 0.0);
    }

    #[test]
    fn ca_bound_values() {
        let s = shots_ca(&stats(0.1, 0.5), 1e-3, 0.99).unwrap();
        assert!((s.value / 9.9e9 - 1.0).abs() < 1e-12);
        assert_eq!(shots_ca(&stats(1.0, 0.5), 1e-3, 0.99).unwrap().value, 0.0);
        assert!(matches!(shots_ca(&stats(0.0, 0.5), 1e-3, 0.99), Err(Error::ConcentratedKernel)));
    }

    #[test]
    fn overflow_is_infeasible() {
        let s = shots_ca(&stats(1e-12, 0.5), 1e-3, 0.99).unwrap();
        assert!(!s.is_feasible());
        assert_eq!(s.display(), "infeasible");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(shots_spread(&stats(0.5, 0.5), 0.0, 0.99).is_err());
        assert!(shots_spread(&stats(0.5, 0.5), 1e-3, 1.0).is_err());
        assert!(shots_ca(&stats(0.5, 0.5), 1e-3, 0.0).is_err());
    }
}
