#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use spinkernel::svm::dual_objective;
use spinkernel::{build_hamiltonian, GramMatrix, ModelParams, ParitySector};

/// Lowest eigenpair of a dense symmetric matrix.
pub fn lowest(m: DMatrix<f64>) -> (f64, Vec<f64>) {
    let eig = SymmetricEigen::new(m);
    let i = eig.eigenvalues.imin();
    (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().copied().collect())
}

/// Ground state from the dense Hamiltonian over the full space.
pub fn dense_ground(p: &ModelParams) -> (f64, Vec<f64>) {
    lowest(build_hamiltonian(p).unwrap().to_dense().unwrap())
}

/// Dense Hamiltonian block of one parity sector, assembled entry by entry
/// from the full dense matrix, and its ground state embedded back.
pub fn dense_ground_in(p: &ModelParams, sector: ParitySector) -> (f64, Vec<f64>) {
    let full = build_hamiltonian(p).unwrap().to_dense().unwrap();
    let idx: Vec<usize> = (0..full.nrows()).filter(|&s| sector.contains(s)).collect();
    let block = DMatrix::from_fn(idx.len(), idx.len(), |a, b| full[(idx[a], idx[b])]);
    let (e, v) = lowest(block);
    let mut out = vec![0.0; full.nrows()];
    for (a, &s) in idx.iter().enumerate() {
        out[s] = v[a];
    }
    (e, out)
}

pub fn overlap2(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    d * d
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dual optimum by enumerating free sets: on each subset solve the equality
/// KKT system and keep feasible, margin-satisfying solutions.
pub fn brute_force_dual(k: &GramMatrix, y: &[i8]) -> f64 {
    let m = y.len();
    let mut best = f64::NEG_INFINITY;
    for mask in 1u32..(1 << m) {
        let s: Vec<usize> = (0..m).filter(|&i| mask >> i & 1 == 1).collect();
        if !s.iter().any(|&i| y[i] > 0) || !s.iter().any(|&i| y[i] < 0) {
            continue;
        }
        let n = s.len();
        let mut a = DMatrix::zeros(n + 1, n + 1);
        let mut rhs = DVector::zeros(n + 1);
        for (r, &i) in s.iter().enumerate() {
            for (c, &j) in s.iter().enumerate() {
                a[(r, c)] = f64::from(y[i] * y[j]) * k.get(i, j);
            }
            a[(r, n)] = f64::from(y[i]);
            a[(n, r)] = f64::from(y[i]);
            rhs[r] = 1.0;
        }
        let Some(sol) = a.lu().solve(&rhs) else { continue };
        if sol.iter().take(n).any(|&v| v < -1e-12) {
            continue;
        }
        let mut alphas = vec![0.0; m];
        for (r, &i) in s.iter().enumerate() {
            alphas[i] = sol[r].max(0.0);
        }
        let b = sol[n];
        let margins_ok = (0..m).all(|t| {
            let d: f64 = (0..m).map(|i| alphas[i] * f64::from(y[i]) * k.get(i, t)).sum::<f64>() + b;
            f64::from(y[t]) * d >= 1.0 - 1e-9
        });
        if margins_ok {
            best = best.max(dual_objective(k, y, &alphas));
        }
    }
    best
}
