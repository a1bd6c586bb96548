//! Small dense kernels: row-major matrices, a cyclic Jacobi eigensolver for
//! the tiny symmetric systems that Capped MSG produces, the capped-simplex
//! projection, and a Cholesky-based SPD inverse.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Index, IndexMut};
use thiserror::Error;

/// Numerical tolerances shared by the kernels and the test suites.
pub mod tol {
    /// Maximum asymmetry accepted by [`super::symmetric_eigen`].
    pub const SYMMETRY: f64 = 1e-10;
    /// Jacobi stops once the off-diagonal Frobenius norm falls below this
    /// (relative to the matrix norm, floored at 1).
    pub const JACOBI_OFF_DIAGONAL: f64 = 1e-12;
    /// Upper bound on Jacobi sweeps.
    pub const JACOBI_MAX_SWEEPS: usize = 100;
    /// Orthonormality tolerance for Q and P rows.
    pub const ORTHONORMAL: f64 = 1e-9;
    /// Trace tolerance for the capped spectrum.
    pub const TRACE: f64 = 1e-9;
    /// Slack on the unit-norm precondition of the MSG update.
    pub const UNIT_NORM: f64 = 1e-9;
    /// Relative residual below which Gram-Schmidt takes a second pass.
    pub const REORTHOGONALIZE: f64 = 1e-8;
    /// Relative residual below which a vector is treated as lying in the span.
    pub const IN_SPAN: f64 = 1e-13;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {gap:e}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("invalid budget {budget} for vector of length {len}")]
    InvalidBudget { budget: f64, len: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("entry count {entries} does not match shape {rows}x{cols}")]
    BadShape {
        rows: usize,
        cols: usize,
        entries: usize,
    },
}

/// Row-major dense matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for DenseMatrix {
    type Error = LinalgError;

    fn try_from(raw: RawMatrix) -> Result<Self, Self::Error> {
        DenseMatrix::from_vec(raw.rows, raw.cols, raw.data)
    }
}

impl From<DenseMatrix> for RawMatrix {
    fn from(m: DenseMatrix) -> Self {
        RawMatrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting bad shapes and
    /// non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if rows * cols != data.len() {
            return Err(LinalgError::BadShape {
                rows,
                cols,
                entries: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Panics on ragged input; intended for literals and tests.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        DenseMatrix {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * other^T`.
    pub fn matmul_transpose(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.cols, "matmul_transpose shape mismatch");
        let mut out = DenseMatrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            for j in 0..other.rows {
                out[(i, j)] = dot(self.row(i), other.row(j));
            }
        }
        out
    }

    /// `self * v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "mul_vec shape mismatch");
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    /// `self^T * v`.
    pub fn transpose_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "transpose_mul_vec shape mismatch");
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            if vr == 0.0 {
                continue;
            }
            axpy(vr, self.row(r), &mut out);
        }
        out
    }

    /// `self += alpha * u v^T`.
    pub fn rank_one_update(&mut self, alpha: f64, u: &[f64], v: &[f64]) {
        assert_eq!(u.len(), self.rows);
        assert_eq!(v.len(), self.cols);
        for (r, &ur) in u.iter().enumerate() {
            let s = alpha * ur;
            if s == 0.0 {
                continue;
            }
            axpy(s, v, self.row_mut(r));
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.shape(), other.shape());
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest deviation of `self * self^T` from the identity.
    pub fn row_orthonormality_error(&self) -> f64 {
        let g = self.matmul_transpose(self);
        g.max_abs_diff(&DenseMatrix::identity(self.rows))
    }

    pub fn check_symmetric(&self, tolerance: f64) -> Result<(), LinalgError> {
        if self.rows != self.cols {
            return Err(LinalgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let scale = self.data.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let gap = (self[(i, j)] - self[(j, i)]).abs();
                if gap > tolerance * scale {
                    return Err(LinalgError::NotSymmetric { i, j, gap });
                }
            }
        }
        Ok(())
    }

    /// Drops row `skip`.
    pub fn without_row(&self, skip: usize) -> DenseMatrix {
        assert!(skip < self.rows);
        let mut data = Vec::with_capacity((self.rows - 1) * self.cols);
        for r in (0..self.rows).filter(|&r| r != skip) {
            data.extend_from_slice(self.row(r));
        }
        DenseMatrix {
            rows: self.rows - 1,
            cols: self.cols,
            data,
        }
    }

    pub fn first_rows(&self, n: usize) -> DenseMatrix {
        assert!(n <= self.rows);
        DenseMatrix {
            rows: n,
            cols: self.cols,
            data: self.data[..n * self.cols].to_vec(),
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Column `j` is the eigenvector of `eigenvalues[j]`.
    pub eigenvectors: DenseMatrix,
}

impl SymmetricEigen {
    pub fn reconstruct(&self) -> DenseMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for r in 0..scaled.rows() {
            for (c, lambda) in self.eigenvalues.iter().enumerate() {
                scaled[(r, c)] *= lambda;
            }
        }
        scaled.matmul_transpose(v)
    }
}

/// Cyclic Jacobi eigendecomposition of a small symmetric matrix.
pub fn symmetric_eigen(m: &DenseMatrix) -> Result<SymmetricEigen, LinalgError> {
    m.check_symmetric(tol::SYMMETRY)?;
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = m.rows();
    // symmetrize so the rotations act on an exactly symmetric matrix
    let mut a = m.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = avg;
            a[(j, i)] = avg;
        }
    }
    let mut v = DenseMatrix::identity(n);
    let threshold = tol::JACOBI_OFF_DIAGONAL * a.frobenius_norm().max(1.0);

    for _ in 0..tol::JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| 2.0 * a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = DenseMatrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            eigenvectors[(r, new_col)] = v[(r, old_col)];
        }
    }
    Ok(SymmetricEigen {
        eigenvalues,
        eigenvectors,
    })
}

// Applies the (p, q) plane rotation J^T A J and accumulates V J.
fn rotate(a: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Euclidean projection of `v` onto `{w : 0 <= w[i] <= 1, sum(w) = budget}`.
///
/// The projection is `clip(v - tau, 0, 1)` for the unique shift `tau` that
/// meets the budget. The clipped sum is piecewise linear in `tau` with
/// breakpoints at `v[i]` and `v[i] - 1`, so a sorted sweep over the
/// breakpoints finds `tau` exactly.
pub fn project_capped_simplex(v: &[f64], budget: f64) -> Result<Vec<f64>, LinalgError> {
    let n = v.len();
    if v.iter().any(|x| !x.is_finite()) || !budget.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    if n == 0 || budget <= 0.0 || budget > n as f64 {
        return Err(LinalgError::InvalidBudget { budget, len: n });
    }
    if budget == n as f64 {
        return Ok(vec![1.0; n]);
    }

    // (position, slope change): entering the linear region at v-1, leaving at v
    let mut events: Vec<(f64, i64)> = Vec::with_capacity(2 * n);
    for &x in v {
        events.push((x - 1.0, 1));
        events.push((x, -1));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    // at the smallest breakpoint every coordinate is clipped to 1
    let mut tau = events[0].0;
    let mut value = n as f64;
    let mut active: i64 = 0;
    let mut i = 0;
    while i < events.len() {
        let pos = events[i].0;
        if active > 0 {
            let next_value = value - active as f64 * (pos - tau);
            if next_value <= budget {
                tau += (value - budget) / active as f64;
                break;
            }
            value = next_value;
        }
        tau = pos;
        while i < events.len() && events[i].0 == pos {
            active += events[i].1;
            i += 1;
        }
    }

    Ok(v.iter().map(|&x| (x - tau).clamp(0.0, 1.0)).collect())
}

/// Cholesky factor `L` with `m = L L^T`.
pub fn cholesky(m: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if m.rows() != m.cols() {
        return Err(LinalgError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let n = m.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { pivot: j, value: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(m: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    let l = cholesky(m)?;
    let n = m.rows();
    let mut inv = DenseMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for col in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[col] = 1.0;
        let x = cholesky_solve(&l, &e);
        for r in 0..n {
            inv[(r, col)] = x[r];
        }
    }
    // symmetrize away rounding
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = avg;
            inv[(j, i)] = avg;
        }
    }
    Ok(inv)
}

fn cholesky_solve(l: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Orthonormalizes the rows of `m` in place with modified Gram-Schmidt,
/// taking a second pass on any row that lost most of its norm.
/// Returns the number of rows that collapsed to zero.
pub fn orthonormalize_rows(m: &mut DenseMatrix) -> usize {
    let (rows, cols) = m.shape();
    let mut collapsed = 0;
    for r in 0..rows {
        let mut row = m.row(r).to_vec();
        let before = norm(&row);
        for pass in 0..2 {
            for prev in 0..r {
                let p = m.row(prev);
                let c = dot(&row, p);
                axpy(-c, p, &mut row);
            }
            if pass == 0 && norm(&row) >= tol::REORTHOGONALIZE * before {
                break;
            }
        }
        let n = norm(&row);
        if n <= tol::IN_SPAN * before.max(f64::MIN_POSITIVE) || n == 0.0 {
            collapsed += 1;
            row = vec![0.0; cols];
        } else {
            row.iter_mut().for_each(|v| *v /= n);
        }
        m.row_mut(r).copy_from_slice(&row);
    }
    collapsed
}
