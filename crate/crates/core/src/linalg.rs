//! Dense row-major matrices and the few kernels the lab needs.
//!
//! All reductions run in a fixed order so results do not depend on the number
//! of worker threads. Row-parallel kernels split work by output row only; each
//! row's dot product is evaluated sequentially.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Rows below which matrix-vector products stay on the calling thread.
const PAR_ROWS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
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

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `y = M x`, one sequential dot product per row.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        if self.rows < PAR_ROWS {
            (0..self.rows).map(|r| dot(self.row(r), x)).collect()
        } else {
            self.data.par_chunks(self.cols).map(|row| dot(row, x)).collect()
        }
    }

    /// `y = Mᵀ g`.
    ///
    /// Rows are accumulated in pairs `(r, r + rows/2)`, so a matrix with
    /// duplicated halves contracted against an antisymmetric `g` yields exact zeros.
    pub fn matvec_t(&self, g: &[f64]) -> Vec<f64> {
        debug_assert_eq!(g.len(), self.rows);
        let half = self.rows / 2;
        let mut out = vec![0.0; self.cols];
        for r in 0..half {
            let (ga, gb) = (g[r], g[r + half]);
            if ga == 0.0 && gb == 0.0 {
                continue;
            }
            let (ra, rb) = (self.row(r), self.row(r + half));
            for ((o, &a), &b) in out.iter_mut().zip(ra).zip(rb) {
                *o += a * ga + b * gb;
            }
        }
        if self.rows % 2 == 1 {
            let r = self.rows - 1;
            let gr = g[r];
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += a * gr;
            }
        }
        out
    }

    /// `C = M B` with `B` given row-major as `cols × k`.
    pub fn matmul_rowmajor(&self, b: &[f64], k: usize) -> Vec<f64> {
        assert_eq!(b.len(), self.cols * k);
        let mut c = vec![0.0; self.rows * k];
        // SAFETY: slices are sized for the row-major strides passed below.
        unsafe {
            matrixmultiply::dgemm(
                self.rows,
                self.cols,
                k,
                1.0,
                self.data.as_ptr(),
                self.cols as isize,
                1,
                b.as_ptr(),
                k as isize,
                1,
                0.0,
                c.as_mut_ptr(),
                k as isize,
                1,
            );
        }
        c
    }

    /// `C = Mᵀ B` with `B` given row-major as `rows × k`.
    pub fn matmul_t_rowmajor(&self, b: &[f64], k: usize) -> Vec<f64> {
        assert_eq!(b.len(), self.rows * k);
        let mut c = vec![0.0; self.cols * k];
        // SAFETY: Mᵀ is expressed through swapped strides over the same buffer.
        unsafe {
            matrixmultiply::dgemm(
                self.cols,
                self.rows,
                k,
                1.0,
                self.data.as_ptr(),
                1,
                self.cols as isize,
                b.as_ptr(),
                k as isize,
                1,
                0.0,
                c.as_mut_ptr(),
                k as isize,
                1,
            );
        }
        c
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        sum_sq(&self.data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }
}

/// Sequential dot product in index order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub fn norm2(a: &[f64]) -> f64 {
    sum_sq(a).sqrt()
}

/// Neumaier-compensated sum of squares.
pub fn sum_sq(a: &[f64]) -> f64 {
    let mut acc = Compensated::default();
    for v in a {
        acc.add(v * v);
    }
    acc.value()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = Compensated::default();
    for v in it {
        acc.add(v);
    }
    acc.value()
}

/// A linear map known only through its action and its adjoint's action.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn apply_t(&self, y: &[f64]) -> Vec<f64>;
}

impl LinearOperator for Matrix {
    fn nrows(&self) -> usize {
        self.rows
    }
    fn ncols(&self) -> usize {
        self.cols
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matvec(x)
    }
    fn apply_t(&self, y: &[f64]) -> Vec<f64> {
        self.matvec_t(y)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PowerIteration {
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self { tol: 1e-8, max_iters: 10_000, seed: 0 }
    }
}

impl PowerIteration {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    /// Largest singular value of `op`.
    ///
    /// Iterates `v ← AᵀA v / ‖AᵀA v‖` from a seeded Gaussian start and stops when
    /// the estimate `‖A v‖` changes by at most `tol` relative between sweeps.
    pub fn spectral_norm<A: LinearOperator + ?Sized>(&self, op: &A) -> Result<f64> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("power iteration tol must be > 0, got {}", self.tol)));
        }
        let n = op.ncols();
        if n == 0 || op.nrows() == 0 {
            return Ok(0.0);
        }
        let mut start = rng::stream(self.seed, Stream::PowerStart, n as u64, op.nrows() as u64);
        let mut v: Vec<f64> = (0..n).map(|_| rng::gaussian(&mut start) + 1e-3 * start.random::<f64>()).collect();
        normalize(&mut v);
        let mut estimate = 0.0;
        for _ in 0..self.max_iters {
            let av = op.apply(&v);
            let sigma = norm2(&av);
            if !sigma.is_finite() {
                return Err(Error::NonFinite("power iteration produced a non-finite norm".into()));
            }
            if sigma == 0.0 {
                return Ok(0.0);
            }
            let mut w = op.apply_t(&av);
            let wn = normalize(&mut w);
            if wn == 0.0 {
                return Ok(sigma);
            }
            if (sigma - estimate).abs() <= self.tol * sigma {
                return Ok(sigma);
            }
            estimate = sigma;
            v = w;
        }
        Err(Error::NoConvergence { iterations: self.max_iters, estimate })
    }
}

/// Spectral norm with the default settings and an explicit tolerance.
pub fn spectral_norm(m: &Matrix, tol: f64) -> Result<f64> {
    PowerIteration::with_tol(tol).spectral_norm(m)
}

/// Normalizes in place, returning the original norm.
pub fn normalize(v: &mut [f64]) -> f64 {
    let n = norm2(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// Largest singular value of a dense matrix by block subspace iteration.
///
/// Keeps an orthonormal `n × k` block `V`, forms `Y = A V` with one GEMM, and takes
/// the top Ritz value of `YᵀY` as the estimate, which never exceeds `‖A‖₂²`.
/// Stops when the estimate changes by at most `tol` relative. One pass over `A`
/// serves all `k` vectors, which matters when `A` does not fit in cache.
pub fn block_spectral_norm(a: &Matrix, block: usize, tol: f64, max_iters: usize, seed: u64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("power iteration tol must be > 0, got {tol}")));
    }
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(0.0);
    }
    let k = block.clamp(1, n);
    let mut start = rng::stream(seed, Stream::PowerStart, n as u64, (m as u64) << 16 | k as u64);
    let mut v = vec![0.0; n * k];
    rng::fill_gaussian(&mut start, &mut v);
    orthonormalize_columns(&mut v, n, k);
    let mut estimate = 0.0;
    for _ in 0..max_iters {
        let y = a.matmul_rowmajor(&v, k);
        let gram = Matrix::from_vec(k, k, transpose_times(&y, m, k))?;
        let sigma = top_eigenvalue_psd(&gram).max(0.0).sqrt();
        if !sigma.is_finite() {
            return Err(Error::NonFinite("block power iteration produced a non-finite norm".into()));
        }
        if sigma == 0.0 {
            return Ok(0.0);
        }
        if (sigma - estimate).abs() <= tol * sigma {
            return Ok(sigma);
        }
        estimate = sigma;
        v = a.matmul_t_rowmajor(&y, k);
        orthonormalize_columns(&mut v, n, k);
    }
    Err(Error::NoConvergence { iterations: max_iters, estimate })
}

/// `YᵀY` for a row-major `rows × k` block.
fn transpose_times(y: &[f64], rows: usize, k: usize) -> Vec<f64> {
    let mut g = vec![0.0; k * k];
    for r in 0..rows {
        let row = &y[r * k..(r + 1) * k];
        for i in 0..k {
            for j in i..k {
                g[i * k + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            g[i * k + j] = g[j * k + i];
        }
    }
    g
}

/// Modified Gram–Schmidt on the columns of a row-major `rows × k` block.
/// Columns that become numerically dependent are zeroed.
fn orthonormalize_columns(v: &mut [f64], rows: usize, k: usize) {
    for j in 0..k {
        for i in 0..j {
            let mut d = 0.0;
            for r in 0..rows {
                d += v[r * k + i] * v[r * k + j];
            }
            for r in 0..rows {
                v[r * k + j] -= d * v[r * k + i];
            }
        }
        let norm = (0..rows).map(|r| v[r * k + j] * v[r * k + j]).sum::<f64>().sqrt();
        let inv = if norm > 1e-300 { 1.0 / norm } else { 0.0 };
        for r in 0..rows {
            v[r * k + j] *= inv;
        }
    }
}

/// Largest eigenvalue of a small symmetric positive semidefinite matrix.
fn top_eigenvalue_psd(g: &Matrix) -> f64 {
    let k = g.rows();
    let mut x: Vec<f64> = (0..k).map(|i| 1.0 + i as f64 * 1e-3).collect();
    normalize(&mut x);
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let mut y = g.matvec(&x);
        let next = dot(&x, &y);
        if normalize(&mut y) == 0.0 {
            return 0.0;
        }
        x = y;
        if (next - lambda).abs() <= 1e-15 * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}
