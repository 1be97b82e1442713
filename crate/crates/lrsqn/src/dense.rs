//! Dense symmetric matrices and the small shared linear algebra kit.
//!
//! Everything here is straightforward O(n^2)/O(n^3) reference code: the
//! structured representation in [`crate::lram`] never touches it on the hot
//! path, but the oracles, the small eigenvalue cores, and a number of tests
//! do. The eigensolver is the cyclic Jacobi method (Numerical Recipes §11.1
//! style), which is unconditionally stable for symmetric input and trivially
//! deterministic.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DenseError {
    #[error("jacobi eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

// ---------------------------------------------------------------------------
// Vector helpers
// ---------------------------------------------------------------------------

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += c * x
pub fn axpy(c: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

// ---------------------------------------------------------------------------
// Symmetric dense matrix
// ---------------------------------------------------------------------------

/// Dense symmetric matrix with full row-major storage.
///
/// Constructors symmetrize, so instances are exactly symmetric by
/// construction and stay that way under the provided operations.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat {
    n: usize,
    data: Vec<f64>,
}

impl SymMat {
    pub fn zeros(n: usize) -> Self {
        SymMat { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn scaled_identity(n: usize, alpha: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = alpha;
        }
        m
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.data[i * d.len() + i] = v;
        }
        m
    }

    /// Build from an arbitrary square array, averaging with the transpose.
    pub fn from_rows(n: usize, rows: &[f64]) -> Self {
        assert_eq!(rows.len(), n * n, "row data must be n*n");
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = 0.5 * (rows[i * n + j] + rows[j * n + i]);
            }
        }
        SymMat { n, data }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = 0.5 * (f(i, j) + f(j, i));
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        SymMat { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Set entry (i, j) and its mirror.
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
    }

    /// self += c * x x^T
    pub fn add_outer(&mut self, c: f64, x: &[f64]) {
        assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                self.data[i * self.n + j] += c * x[i] * x[j];
            }
        }
    }

    /// self += c * (x y^T + y x^T)
    pub fn add_sym_outer(&mut self, c: f64, x: &[f64], y: &[f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                self.data[i * self.n + j] += c * (x[i] * y[j] + y[i] * x[j]);
            }
        }
    }

    pub fn add_scaled(&mut self, c: f64, other: &SymMat) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in self.data.iter_mut() {
            *a *= c;
        }
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn sub(&self, other: &SymMat) -> SymMat {
        assert_eq!(self.n, other.n);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        SymMat { n: self.n, data }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Eigendecomposition by cyclic Jacobi sweeps. Eigenvalues come back in
    /// ascending order; each eigenvector column has its largest-magnitude
    /// entry made positive so the output is deterministic.
    pub fn eigen(&self, max_sweeps: usize) -> Result<Eigen, DenseError> {
        jacobi_eigen(self, max_sweeps)
    }

    /// Cholesky factor L with self = L L^T. Fails on non-PD input.
    pub fn cholesky(&self) -> Result<Chol, DenseError> {
        let n = self.n;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self.get(i, j);
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(DenseError::NotPositiveDefinite { index: i, pivot: sum });
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Ok(Chol { n, l })
    }
}

/// Result of a symmetric eigendecomposition: `a = V diag(values) V^T`.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// Row-major n x n; column j is the eigenvector for `values[j]`.
    vectors: Vec<f64>,
    n: usize,
}

impl Eigen {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn vector(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.vectors[i * self.n + j]).collect()
    }

    pub fn vector_entry(&self, i: usize, j: usize) -> f64 {
        self.vectors[i * self.n + j]
    }

    /// V^T x
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.vectors[i * self.n + j] * x[i]).sum())
            .collect()
    }

    /// V c
    pub fn combine(&self, c: &[f64]) -> Vec<f64> {
        assert_eq!(c.len(), self.n);
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.vectors[i * self.n + j] * c[j]).sum())
            .collect()
    }

    /// Reassemble V diag(values) V^T with possibly modified eigenvalues.
    pub fn reassemble(&self, values: &[f64]) -> SymMat {
        assert_eq!(values.len(), self.n);
        let n = self.n;
        SymMat::from_fn(n, |i, j| {
            (0..n)
                .map(|k| values[k] * self.vectors[i * n + k] * self.vectors[j * n + k])
                .sum()
        })
    }
}

/// Lower-triangular Cholesky factor.
pub struct Chol {
    n: usize,
    l: Vec<f64>,
}

impl Chol {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= self.l[i * n + k] * y[k];
            }
            y[i] = sum / self.l[i * n + i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in i + 1..n {
                sum -= self.l[k * n + i] * x[k];
            }
            x[i] = sum / self.l[i * n + i];
        }
        x
    }

    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| 2.0 * self.l[i * self.n + i].ln()).sum()
    }
}

fn jacobi_eigen(m: &SymMat, max_sweeps: usize) -> Result<Eigen, DenseError> {
    let n = m.dim();
    if n == 0 {
        return Ok(Eigen { values: vec![], vectors: vec![], n: 0 });
    }
    let mut a = m.data.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    if n == 1 {
        return Ok(Eigen { values: vec![a[0]], vectors: v, n });
    }

    let scale = m.frob_norm().max(f64::MIN_POSITIVE);
    let tol = 1e-15 * scale;
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for p in 0..n - 1 {
            for q in p + 1..n {
                off += a[p * n + q].abs();
            }
        }
        if off <= tol {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= tol / (n * n) as f64 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta.abs() > 1e150 {
                    // Avoid overflow in theta^2; tan collapses to 1/(2 theta).
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for j in 0..n {
                    if j != p && j != q {
                        let ajp = a[j * n + p];
                        let ajq = a[j * n + q];
                        let new_p = ajp - s * (ajq + ajp * tau);
                        let new_q = ajq + s * (ajp - ajq * tau);
                        a[j * n + p] = new_p;
                        a[p * n + j] = new_p;
                        a[j * n + q] = new_q;
                        a[q * n + j] = new_q;
                    }
                }
                for j in 0..n {
                    let vjp = v[j * n + p];
                    let vjq = v[j * n + q];
                    v[j * n + p] = vjp - s * (vjq + vjp * tau);
                    v[j * n + q] = vjq + s * (vjp - vjq * tau);
                }
            }
        }
    }
    if !converged {
        // Check once more; the last sweep may have finished the job.
        let mut off = 0.0;
        for p in 0..n - 1 {
            for q in p + 1..n {
                off += a[p * n + q].abs();
            }
        }
        if off > tol {
            return Err(DenseError::NoConvergence(max_sweeps));
        }
    }

    // Sort ascending and fix signs for deterministic output.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].partial_cmp(&a[j * n + j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&k| a[k * n + k]).collect();
    let mut vectors = vec![0.0; n * n];
    for (new_j, &old_j) in order.iter().enumerate() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for i in 0..n {
            let x = v[i * n + old_j].abs();
            if x > best_abs {
                best_abs = x;
                best = i;
            }
        }
        let flip = if v[best * n + old_j] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[i * n + new_j] = flip * v[i * n + old_j];
        }
    }
    Ok(Eigen { values, vectors, n })
}
