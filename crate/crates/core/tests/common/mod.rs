//! Independent reference computations built on nalgebra.
#![allow(dead_code)]

use dpp_core::linalg::DenseMatrix;
use dpp_core::rng::StreamRng;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn gaussian(n: usize, rng: &mut StreamRng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn unit_gaussian(n: usize, rng: &mut StreamRng) -> Vec<f64> {
    let g = gaussian(n, rng);
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    g.into_iter().map(|v| v / norm).collect()
}

pub fn labels(k: usize, rate: f64, rng: &mut StreamRng) -> Vec<i8> {
    (0..k)
        .map(|_| if rng.random::<f64>() < rate { 1 } else { -1 })
        .collect()
}

pub fn as_f64(y: &[i8]) -> Vec<f64> {
    y.iter().map(|&v| f64::from(v)).collect()
}

/// `rows x cols` with orthonormal rows via nalgebra's QR.
pub fn random_orthonormal(rows: usize, cols: usize, rng: &mut StreamRng) -> DenseMatrix {
    let g = DMatrix::from_fn(cols, rows, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    from_na(&q.transpose())
}

pub fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out[(r, c)] = m[(r, c)];
        }
    }
    out
}

pub fn max_abs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

/// Capped simplex projection by bisection on the shift.
pub fn capped_simplex_bisection(v: &[f64], budget: f64) -> Vec<f64> {
    let sum = |tau: f64| v.iter().map(|x| (x - tau).clamp(0.0, 1.0)).sum::<f64>();
    let mut lo = v.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    v.iter().map(|x| (x - tau).clamp(0.0, 1.0)).collect()
}

/// One dense Capped MSG step: `U + eta y y^T`, top `M + 1` eigenpairs,
/// eigenvalues projected onto the capped simplex of mass `M`.
pub fn dense_msg_step(u: &DMatrix<f64>, y: &[f64], eta: f64, m: usize) -> DMatrix<f64> {
    let y = DVector::from_column_slice(y);
    let next = u + eta * &y * y.transpose();
    let eig = SymmetricEigen::new(next);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let kept: Vec<f64> = order[..=m].iter().map(|&i| eig.eigenvalues[i]).collect();
    let sigma = capped_simplex_bisection(&kept, m as f64);
    let k = u.nrows();
    let mut out = DMatrix::zeros(k, k);
    for (s, &i) in sigma.iter().zip(&order) {
        let v = eig.eigenvectors.column(i);
        out += *s * v * v.transpose();
    }
    out
}

/// `(lambda I + X^T X)^{-1} X^T Y` for rows `xs` and targets `ys`.
pub fn batch_ridge(xs: &[Vec<f64>], ys: &[Vec<f64>], lambda: f64) -> DMatrix<f64> {
    let d = xs[0].len();
    let k = ys[0].len();
    let x = DMatrix::from_fn(xs.len(), d, |i, j| xs[i][j]);
    let y = DMatrix::from_fn(ys.len(), k, |i, j| ys[i][j]);
    let a = DMatrix::identity(d, d) * lambda + x.transpose() * &x;
    a.cholesky()
        .expect("positive definite")
        .solve(&(x.transpose() * y))
}
