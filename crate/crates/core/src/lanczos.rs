//! Thick-restart Lanczos for the lowest eigenpair of a real symmetric operator.
//!
//! The Krylov basis is kept in memory and fully reorthogonalized at every
//! step by classical Gram–Schmidt, with a second pass when the first one
//! cancels most of the vector.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};

const PAR_MIN_LEN: usize = 1 << 15;
const PAR_CHUNK: usize = 1 << 13;

/// Deterministic dot product: chunk partial sums are always combined in the
/// same order, whatever the thread schedule.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    if a.len() < PAR_MIN_LEN {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let partial: Vec<f64> = a
        .par_chunks(PAR_CHUNK)
        .zip(b.par_chunks(PAR_CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    if y.len() < PAR_MIN_LEN {
        y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
    } else {
        y.par_chunks_mut(PAR_CHUNK)
            .zip(x.par_chunks(PAR_CHUNK))
            .for_each(|(yc, xc)| yc.iter_mut().zip(xc).for_each(|(yi, xi)| *yi += alpha * xi));
    }
}

fn scale(alpha: f64, y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v *= alpha);
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthogonalize `w` against `basis` and return its final norm.
fn reorthogonalize(basis: &[Vec<f64>], w: &mut [f64]) -> f64 {
    let mut before = norm(w);
    for _ in 0..3 {
        for q in basis {
            let c = dot(q, w);
            axpy(-c, q, w);
        }
        let after = norm(w);
        if after > std::f64::consts::FRAC_1_SQRT_2 * before {
            return after;
        }
        before = after;
    }
    before
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosConfig {
    /// Target for ‖Hx − θx‖₂.
    pub tol: f64,
    /// Total matrix-vector products allowed across restarts.
    pub max_iter: usize,
    /// Krylov basis size before a restart.
    pub krylov_dim: usize,
}

#[derive(Debug, Clone)]
pub struct LanczosResult {
    pub eigenvalue: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn tridiagonal(alphas: &[f64], betas: &[f64]) -> DMatrix<f64> {
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    t
}

/// Eigenpairs of a small symmetric matrix, ascending.
fn sorted_eigen(t: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let m = t.nrows();
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Linear combination Σ cᵢ qᵢ.
fn combine(basis: &[Vec<f64>], coeffs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut x = vec![0.0; basis[0].len()];
    for (c, q) in coeffs.zip(basis) {
        axpy(c, q, &mut x);
    }
    x
}

/// Lowest eigenpair of the operator applied by `matvec(v, out)`.
///
/// Thick-restarted: when the basis is full, the `keep` lowest Ritz vectors
/// and the current residual direction seed the next cycle, which keeps
/// clustered low eigenvalues from stalling convergence. `start` must be
/// nonzero; it is normalized here. Returns [`Error::NotConverged`] rather
/// than a partial result.
pub fn lowest_eigenpair<F>(mut matvec: F, start: Vec<f64>, cfg: &LanczosConfig) -> Result<LanczosResult>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let dim = start.len();
    let krylov_dim = cfg.krylov_dim.clamp(4, dim.max(4)).min(dim);
    let keep = (krylov_dim / 5).clamp(1, 20);
    let mut v0 = start;
    let n0 = norm(&v0);
    if !(n0 > 0.0) {
        return Err(Error::InvalidParams("Lanczos start vector is zero".into()));
    }
    scale(1.0 / n0, &mut v0);

    let mut iterations = 0usize;
    let mut w = vec![0.0; dim];
    let mut basis: Vec<Vec<f64>> = vec![v0];
    // projected matrix Vᵀ H V, filled column by column
    let mut t = DMatrix::<f64>::zeros(krylov_dim, krylov_dim);
    let mut residual;
    loop {
        let mut b;
        let mut values;
        let mut vectors;
        loop {
            let j = basis.len() - 1;
            matvec(&basis[j], &mut w)?;
            iterations += 1;
            let mut coeffs = vec![0.0; basis.len()];
            let mut before = norm(&w);
            b = before;
            for _ in 0..3 {
                for (c, q) in coeffs.iter_mut().zip(&basis) {
                    let d = dot(q, &w);
                    axpy(-d, q, &mut w);
                    *c += d;
                }
                b = norm(&w);
                if b > std::f64::consts::FRAC_1_SQRT_2 * before {
                    break;
                }
                before = b;
            }
            for (i, &c) in coeffs.iter().enumerate() {
                t[(i, j)] = c;
                t[(j, i)] = c;
            }
            let m = basis.len();
            let full = m >= krylov_dim || iterations >= cfg.max_iter;
            // invariant subspace: Ritz pairs are exact
            let exhausted = b <= 1e-13 * t[(j, j)].abs().max(1.0);
            // the small eigenproblem costs O(m³); check every few steps
            if full || exhausted || m % 4 == 0 {
                (values, vectors) = sorted_eigen(t.view((0, 0), (m, m)).into_owned());
                let estimate = b * vectors[(m - 1, 0)].abs();
                if full || exhausted || estimate < 0.1 * cfg.tol {
                    break;
                }
            }
            t[(m, j)] = b;
            t[(j, m)] = b;
            let mut next = w.clone();
            scale(1.0 / b, &mut next);
            basis.push(next);
        }

        let m = basis.len();
        let mut x = combine(&basis, vectors.column(0).iter().copied());
        let nx = norm(&x);
        scale(1.0 / nx, &mut x);
        let mut hx = vec![0.0; dim];
        matvec(&x, &mut hx)?;
        iterations += 1;
        let theta = dot(&x, &hx);
        axpy(-theta, &x, &mut hx);
        residual = norm(&hx);
        if residual <= cfg.tol {
            return Ok(LanczosResult {
                eigenvalue: theta,
                vector: x,
                residual,
                iterations,
            });
        }
        if iterations >= cfg.max_iter {
            break;
        }

        let exhausted = b <= 1e-13 * values[0].abs().max(1.0);
        if exhausted {
            // nothing left to extend with; start over from the Ritz vector
            basis = vec![x];
            t.fill(0.0);
            continue;
        }
        let k = keep.min(m - 1);
        let mut kept: Vec<Vec<f64>> = (0..k)
            .map(|c| if c == 0 { x.clone() } else { combine(&basis, vectors.column(c).iter().copied()) })
            .collect();
        t.fill(0.0);
        for i in 0..k {
            t[(i, i)] = values[i];
            let s = b * vectors[(m - 1, i)];
            t[(i, k)] = s;
            t[(k, i)] = s;
        }
        scale(1.0 / b, &mut w);
        kept.push(w.clone());
        basis = kept;
    }
    Err(Error::NotConverged {
        solver: "lanczos",
        iterations,
        residual,
    })
}

/// Lowest Ritz value after at most `steps` Lanczos steps from `start`, with
/// no convergence check. An upper bound on the lowest eigenvalue.
pub fn ritz_estimate<F>(mut matvec: F, start: Vec<f64>, steps: usize) -> Result<f64>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let dim = start.len();
    let mut v = start;
    let n0 = norm(&v);
    if !(n0 > 0.0) {
        return Err(Error::InvalidParams("Lanczos start vector is zero".into()));
    }
    scale(1.0 / n0, &mut v);
    let mut basis = vec![v];
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut w = vec![0.0; dim];
    loop {
        let j = basis.len() - 1;
        matvec(&basis[j], &mut w)?;
        let a = dot(&basis[j], &w);
        alphas.push(a);
        let b = reorthogonalize(&basis, &mut w);
        if b <= 1e-13 * a.abs().max(1.0) || basis.len() >= steps.min(dim) {
            break;
        }
        betas.push(b);
        let mut next = w.clone();
        scale(1.0 / b, &mut next);
        basis.push(next);
    }
    Ok(sorted_eigen(tridiagonal(&alphas, &betas)).0[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_operator() {
        let d: Vec<f64> = (0..50).map(|i| i as f64 * 0.1 - 1.0).collect();
        let start = vec![1.0; 50];
        let cfg = LanczosConfig {
            tol: 1e-12,
            max_iter: 500,
            krylov_dim: 20,
        };
        let res = lowest_eigenpair(
            |v, out| {
                for i in 0..v.len() {
                    out[i] = d[i] * v[i];
                }
                Ok(())
            },
            start,
            &cfg,
        )
        .unwrap();
        assert!((res.eigenvalue + 1.0).abs() < 1e-12);
        assert!((res.vector[0].abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ritz_estimate_bounds_from_above() {
        let d: Vec<f64> = (0..200).map(|i| i as f64 * 0.01).collect();
        let e = ritz_estimate(
            |v, out| {
                for i in 0..v.len() {
                    out[i] = d[i] * v[i];
                }
                Ok(())
            },
            vec![1.0; 200],
            40,
        )
        .unwrap();
        assert!(e >= 0.0 && e < 0.01);
    }

    #[test]
    fn fails_loudly() {
        let d: Vec<f64> = (0..400).map(|i| (i as f64).sqrt()).collect();
        let cfg = LanczosConfig {
            tol: 1e-14,
            max_iter: 6,
            krylov_dim: 3,
        };
        let res = lowest_eigenpair(
            |v, out| {
                for i in 0..v.len() {
                    out[i] = d[i] * v[i];
                }
                Ok(())
            },
            vec![1.0; 400],
            &cfg,
        );
        assert!(matches!(res, Err(Error::NotConverged { .. })));
    }
}
