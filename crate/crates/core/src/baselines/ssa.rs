//! Singular spectrum analysis with Cadzow iterations.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ComplexSeries;

/// Eigenvalues of the Gram matrix below this fraction of the largest are
/// treated as round-off and never counted towards the rank.
const RANK_FLOOR: f64 = 1e-10;
const SUBSPACE_MAX_ITER: usize = 500;
const SUBSPACE_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsaConfig {
    pub window: usize,
    /// Singular values above `tau · median` count as signal.
    pub tau: f64,
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for SsaConfig {
    fn default() -> Self {
        Self { window: 512, tau: 3.0, max_iter: 10, rel_tol: 1e-6 }
    }
}

impl SsaConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(1 < self.window && self.window < n) {
            return Err(Error::invalid(format!("window {} must lie strictly between 1 and {n}", self.window)));
        }
        if !(self.tau > 0.0 && self.rel_tol >= 0.0) {
            return Err(Error::invalid("tau must be positive and rel_tol nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsaOutput {
    pub series: ComplexSeries,
    pub rank: usize,
    pub iterations: usize,
    /// Distance of each successive Hankel matrix to the rank-`r` set.
    pub distances: Vec<f64>,
}

/// `H Hᴴ` for the `L × (n−L+1)` Hankel matrix of `x`, built by the shift recursion.
fn hankel_gram(x: &[Complex64], l: usize) -> DMatrix<Complex64> {
    let k = x.len() - l + 1;
    let mut g = DMatrix::zeros(l, l);
    for j in 0..l {
        g[(0, j)] = (0..k).map(|c| x[c] * x[j + c].conj()).sum::<Complex64>();
    }
    for i in 1..l {
        for j in i..l {
            g[(i, j)] = g[(i - 1, j - 1)] + x[i + k - 1] * x[j + k - 1].conj() - x[i - 1] * x[j - 1].conj();
        }
        for j in 0..i {
            g[(i, j)] = g[(j, i)].conj();
        }
    }
    g
}

fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Rank from the singular values of the trajectory matrix.
pub fn select_rank(gram_eigenvalues: &[f64], tau: f64) -> usize {
    let top = gram_eigenvalues.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return 0;
    }
    let sv: Vec<f64> = gram_eigenvalues.iter().map(|&e| e.max(0.0).sqrt()).collect();
    let cut = tau * median(&sv);
    gram_eigenvalues.iter().zip(&sv).filter(|&(&e, &s)| s > cut && e > RANK_FLOOR * top).count()
}

/// Orthonormal basis of the leading `r`-dimensional invariant subspace of a
/// Hermitian PSD matrix, with its Ritz values.
fn top_subspace(g: &DMatrix<Complex64>, mut u: DMatrix<Complex64>) -> (DMatrix<Complex64>, DVector<f64>) {
    let mut ritz = DVector::zeros(u.ncols());
    for _ in 0..SUBSPACE_MAX_ITER {
        let q = (g * &u).qr().q();
        let small = q.adjoint() * g * &q;
        let eig = small.symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let vecs = DMatrix::from_fn(q.ncols(), order.len(), |i, j| eig.eigenvectors[(i, order[j])]);
        let next = q * vecs;
        let vals = DVector::from_iterator(order.len(), order.iter().map(|&j| eig.eigenvalues[j]));
        // Converged when the projector stops moving.
        let overlap = (next.adjoint() * &u).norm_squared();
        let delta = (u.ncols() as f64 - overlap).abs();
        u = next;
        ritz = vals;
        if delta < SUBSPACE_TOL {
            break;
        }
    }
    (u, ritz)
}

/// Projects the Hankel matrix of `x` onto span(`u`) and averages anti-diagonals.
fn project_and_average(x: &[Complex64], u: &DMatrix<Complex64>) -> Vec<Complex64> {
    let (l, r) = (u.nrows(), u.ncols());
    let n = x.len();
    let k = n - l + 1;
    // W = Uᴴ H, r × K.
    let mut w = vec![Complex64::new(0.0, 0.0); r * k];
    for c in 0..r {
        for j in 0..k {
            w[c * k + j] = (0..l).map(|i| u[(i, c)].conj() * x[i + j]).sum();
        }
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..l {
        for c in 0..r {
            let uic = u[(i, c)];
            let row = &w[c * k..(c + 1) * k];
            for (j, wj) in row.iter().enumerate() {
                out[i + j] += uic * wj;
            }
        }
    }
    for (s, v) in out.iter_mut().enumerate() {
        let count = (s + 1).min(l).min(k).min(n - s);
        *v /= count as f64;
    }
    out
}

fn initial_basis(g: &DMatrix<Complex64>, r: usize) -> DMatrix<Complex64> {
    let mut cols: Vec<usize> = (0..g.ncols()).collect();
    cols.sort_by(|&a, &b| g.column(b).norm().total_cmp(&g.column(a).norm()));
    DMatrix::from_fn(g.nrows(), r, |i, j| g[(i, cols[j])])
}

pub fn ssa_decompose(noisy: &ComplexSeries, cfg: &SsaConfig) -> Result<SsaOutput> {
    let n = noisy.len();
    cfg.validate(n)?;
    let mut x = noisy.as_slice().to_vec();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("SSA input contains non-finite samples".into()));
    }
    let g = hankel_gram(&x, cfg.window);
    let eig = g.clone().symmetric_eigenvalues();
    if eig.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigenvalue decomposition failed".into()));
    }
    let rank = select_rank(eig.as_slice(), cfg.tau);
    if rank == 0 {
        return Ok(SsaOutput { series: ComplexSeries::zeros(n), rank, iterations: 0, distances: vec![] });
    }
    let mut u = initial_basis(&g, rank);
    let mut g = g;
    let mut distances = Vec::new();
    let mut iterations = 0;
    for _ in 0..cfg.max_iter.max(1) {
        let (basis, ritz) = top_subspace(&g, u);
        let trace: f64 = (0..g.nrows()).map(|i| g[(i, i)].re).sum();
        distances.push((trace - ritz.sum()).max(0.0).sqrt());
        let next = project_and_average(&x, &basis);
        iterations += 1;
        let change: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let scale: f64 = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        x = next;
        u = basis;
        g = hankel_gram(&x, cfg.window);
        if change <= cfg.rel_tol * scale {
            break;
        }
    }
    let (_, ritz) = top_subspace(&g, u);
    let trace: f64 = (0..g.nrows()).map(|i| g[(i, i)].re).sum();
    distances.push((trace - ritz.sum()).max(0.0).sqrt());
    Ok(SsaOutput { series: ComplexSeries::new(x)?, rank, iterations, distances })
}

pub fn ssa_denoise(noisy: &ComplexSeries, cfg: &SsaConfig) -> Result<ComplexSeries> {
    ssa_decompose(noisy, cfg).map(|o| o.series)
}
