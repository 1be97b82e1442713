//! Eigendecomposition refresh after a low-rank update.
//!
//! Given `alpha*I + U C U^T` with a thin `U` (n x r, r small), recover the
//! eigenpair form `alpha*I + E diag(offsets) E^T` without ever touching an
//! n x n matrix. The route: factor the Gram matrix `G = U^T U` as
//! `P^T G P = L D L^T` with diagonal pivoting, which yields an implicit QR
//! factorization `U P = Q sqrt(D) L^T`; numerically rank-deficient
//! directions show up as pivots at or below a threshold `nu` and are simply
//! dropped. The surviving r' x r' core `sqrt(D) L^T P^T C P L sqrt(D)` is
//! eigendecomposed by Jacobi sweeps, and `E = Q V`. Total cost
//! O(n r^2 + r^3).

use thiserror::Error;

use crate::dense::{DenseError, Eigen, SymMat};
use crate::lram::{zero_offset_tol, EigenLmMatrix};

#[derive(Debug, Error)]
pub enum EigUpdateError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("small symmetric eigensolver failed: {0}")]
    Eigensolver(#[from] DenseError),
}

/// Maximum Jacobi sweeps for the small symmetric eigensolver.
pub const EIG_SWEEP_CAP: usize = 100;

/// Pivoted LDL^T factorization of a small symmetric PSD-up-to-roundoff
/// matrix: `P^T G P = L D L^T` with `L` unit lower triangular.
///
/// Pivoting selects the largest remaining diagonal entry each step, so the
/// retained (pivot > nu) indices always form a prefix of the permuted order;
/// dropped pivots are left uneliminated with a unit column in `L`.
#[derive(Debug, Clone)]
pub struct LdltFactors {
    /// `perm[k]` is the original index pivoted to position k.
    pub perm: Vec<usize>,
    /// Unit lower triangular, row-major r x r.
    pub lower: Vec<f64>,
    /// Diagonal of D in pivoted order. Dropped positions hold the residual
    /// diagonal value that failed the threshold.
    pub diag: Vec<f64>,
    /// `retained[k]` is true when pivot k was above the threshold.
    pub retained: Vec<bool>,
}

impl LdltFactors {
    pub fn order(&self) -> usize {
        self.perm.len()
    }

    pub fn retained_count(&self) -> usize {
        self.retained.iter().filter(|&&b| b).count()
    }

    /// Reassemble `L D L^T` in the pivoted order (all positions, dropped
    /// pivots contributing their residual diagonal). Test support.
    pub fn reassemble(&self) -> SymMat {
        let r = self.order();
        SymMat::from_fn(r, |i, j| {
            (0..r)
                .map(|k| self.lower[i * r + k] * self.diag[k] * self.lower[j * r + k])
                .sum()
        })
    }
}

/// Diagonally pivoted LDL^T with drop threshold `nu`.
pub fn ldlt_pivoted(g: &SymMat, nu: f64) -> LdltFactors {
    let r = g.dim();
    let mut work = SymMat::from_fn(r, |i, j| g.get(i, j));
    let mut perm: Vec<usize> = (0..r).collect();
    let mut lower = vec![0.0; r * r];
    let mut diag = vec![0.0; r];
    let mut retained = vec![false; r];

    for k in 0..r {
        lower[k * r + k] = 1.0;
        // largest remaining diagonal
        let mut pivot_idx = k;
        for j in k + 1..r {
            if work.get(j, j) > work.get(pivot_idx, pivot_idx) {
                pivot_idx = j;
            }
        }
        if pivot_idx != k {
            perm.swap(k, pivot_idx);
            // symmetric permutation of the working matrix; r is small
            let swap = |i: usize| {
                if i == k {
                    pivot_idx
                } else if i == pivot_idx {
                    k
                } else {
                    i
                }
            };
            work = SymMat::from_fn(r, |i, j| work.get(swap(i), swap(j)));
            // already-computed multiplier rows swap too
            for c in 0..k {
                lower.swap(k * r + c, pivot_idx * r + c);
            }
        }
        let pivot = work.get(k, k);
        diag[k] = pivot;
        if pivot <= nu {
            // Everything remaining is at or below the threshold as well;
            // leave it uneliminated.
            continue;
        }
        retained[k] = true;
        for i in k + 1..r {
            let m = work.get(i, k) / pivot;
            lower[i * r + k] = m;
            for j in k + 1..=i {
                let v = work.get(i, j) - m * work.get(j, k);
                work.set_sym(i, j, v);
            }
        }
    }
    LdltFactors { perm, lower, diag, retained }
}

/// Rebuild the eigenpair form of `alpha*I + U C U^T`.
///
/// `u` is column-major n x r. Pivots of the Gram matrix at or below `nu`
/// are treated as zero, truncating the rank. Offsets that come out
/// numerically zero are folded into the shift.
pub fn recompose(
    u: &[f64],
    n: usize,
    c: &SymMat,
    alpha: f64,
    nu: f64,
) -> Result<EigenLmMatrix, EigUpdateError> {
    let r = c.dim();
    if u.len() != n * r {
        return Err(EigUpdateError::DimensionMismatch(format!(
            "u has {} entries, expected n*r = {}",
            u.len(),
            n * r
        )));
    }
    if r == 0 {
        return Ok(EigenLmMatrix::shifted_identity(n, alpha));
    }
    let col = |j: usize| &u[j * n..(j + 1) * n];

    // Gram matrix, exactly symmetric by construction.
    let gram = SymMat::from_fn(r, |i, j| crate::dense::dot(col(i), col(j)));
    let factors = ldlt_pivoted(&gram, nu);
    // Gram rank cannot exceed n; with nu = 0, roundoff can leave tiny
    // positive pivots past that, which are spurious by construction.
    let kept = factors.retained_count().min(n);
    if kept == 0 {
        return Ok(EigenLmMatrix::shifted_identity(n, alpha));
    }
    // Retained pivots form a prefix of the pivoted order.
    debug_assert!(factors.retained[..kept].iter().all(|&b| b));

    // X = U P L^{-T}, first `kept` columns; then Q = X D^{-1/2}.
    // Column j of X solves X_j = (UP)_j - sum_{t<j} L[j][t] X_t; earlier
    // columns are already scaled to Q_t = X_t / sqrt(d_t).
    let mut q = vec![0.0; n * kept];
    for j in 0..kept {
        let (done, current) = q.split_at_mut(j * n);
        let current = &mut current[..n];
        current.copy_from_slice(col(factors.perm[j]));
        for t in 0..j {
            let m = factors.lower[j * r + t];
            if m != 0.0 {
                let prev = &done[t * n..(t + 1) * n];
                let coeff = m * factors.diag[t].sqrt();
                for (x, p) in current.iter_mut().zip(prev) {
                    *x -= coeff * p;
                }
            }
        }
        let inv_sqrt = 1.0 / factors.diag[j].sqrt();
        for x in current.iter_mut() {
            *x *= inv_sqrt;
        }
    }

    // Core = sqrt(D) L^T (P^T C P) L sqrt(D), retained block only.
    let permuted_c =
        SymMat::from_fn(r, |i, j| c.get(factors.perm[i], factors.perm[j]));
    let core = SymMat::from_fn(kept, |i, j| {
        let mut sum = 0.0;
        // (L^T M L)[i][j] = sum_{a>=i, b>=j} L[a][i] M[a][b] L[b][j]
        for a in i..r {
            let lai = factors.lower[a * r + i];
            if lai == 0.0 {
                continue;
            }
            for b in j..r {
                let lbj = factors.lower[b * r + j];
                if lbj != 0.0 {
                    sum += lai * permuted_c.get(a, b) * lbj;
                }
            }
        }
        sum * factors.diag[i].sqrt() * factors.diag[j].sqrt()
    });

    let eig = sym_eig_small(&core)?;

    // E = Q V
    let mut cols = vec![0.0; n * kept];
    for j in 0..kept {
        let dst = &mut cols[j * n..(j + 1) * n];
        for k in 0..kept {
            let w = eig.vector_entry(k, j);
            if w != 0.0 {
                let qk = &q[k * n..(k + 1) * n];
                for (d, x) in dst.iter_mut().zip(qk) {
                    *d += w * x;
                }
            }
        }
    }

    // Fold numerically-zero eigenvalue offsets into the shift.
    let tol = zero_offset_tol(alpha);
    let mut offsets = Vec::with_capacity(kept);
    let mut kept_cols = Vec::with_capacity(n * kept);
    for j in 0..kept {
        if eig.values[j].abs() > tol {
            offsets.push(eig.values[j]);
            kept_cols.extend_from_slice(&cols[j * n..(j + 1) * n]);
        }
    }
    let mut mat = EigenLmMatrix::from_parts_unchecked(n, alpha, offsets, kept_cols);
    mat.fold_zero_offsets();
    Ok(mat)
}

/// Deterministic symmetric eigendecomposition for small matrices: cyclic
/// Jacobi sweeps, eigenvalues ascending, each eigenvector's
/// largest-magnitude entry made positive.
pub fn sym_eig_small(a: &SymMat) -> Result<Eigen, EigUpdateError> {
    Ok(a.eigen(EIG_SWEEP_CAP)?)
}
