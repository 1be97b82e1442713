//! Broyden-class quasi-Newton updates in compact form.
//!
//! Updating `B = alpha*I + E diag(offsets) E^T` with a curvature pair
//! `(s, y)` appends at most two columns to the low-rank factor: the result
//! is expressed as `alpha*I + U C U^T` with `U = [E  c  y]` and a
//! block-diagonal `C`, ready for [`crate::eigupdate::recompose`]. The shift
//! is untouched, so the rank of the low-rank term grows by at most two.
//!
//! `phi` is the Broyden interpolation parameter: 0 gives BFGS, 1 gives DFP
//! (handled as a separate branch with a coupled 2 x 2 block, since the
//! general formula divides by `phi - 1`).

use thiserror::Error;

use crate::dense::{dot, norm2, SymMat};
use crate::lram::EigenLmMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum UpdateError {
    #[error("curvature s^T y is zero; the update is undefined")]
    ZeroCurvature,
    #[error("s^T B s is zero with phi != 1; the update is undefined")]
    DegenerateQuadForm,
    #[error("broyden parameter phi must be finite, got {0}")]
    NonFinitePhi(f64),
    #[error("curvature pair dimension {got} does not match matrix dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Iterate difference `s` and gradient difference `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvaturePair {
    pub s: Vec<f64>,
    pub y: Vec<f64>,
}

impl CurvaturePair {
    pub fn new(s: Vec<f64>, y: Vec<f64>) -> Self {
        assert_eq!(s.len(), y.len(), "s and y must have the same length");
        CurvaturePair { s, y }
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    pub fn curvature(&self) -> f64 {
        dot(&self.s, &self.y)
    }
}

/// Update skip rule: accept the pair only when `s^T y >= eps ||s|| ||y||`.
pub fn curvature_check(pair: &CurvaturePair, eps_curv: f64) -> bool {
    pair.curvature() >= eps_curv * norm2(&pair.s) * norm2(&pair.y)
}

/// The updated matrix `alpha*I + U C U^T` before re-eigendecomposition.
#[derive(Debug, Clone)]
pub struct CompactUpdate {
    pub alpha: f64,
    /// Column-major n x k factor.
    pub u: Vec<f64>,
    pub n: usize,
    /// k x k symmetric coefficient matrix.
    pub c: SymMat,
}

impl CompactUpdate {
    pub fn rank_bound(&self) -> usize {
        self.c.dim()
    }

    /// Hand the factors to [`crate::eigupdate::recompose`].
    pub fn recompose(&self, nu: f64) -> Result<EigenLmMatrix, crate::eigupdate::EigUpdateError> {
        crate::eigupdate::recompose(&self.u, self.n, &self.c, self.alpha, nu)
    }
}

fn stacked_factor(b: &EigenLmMatrix, extra: [&[f64]; 2]) -> (Vec<f64>, usize) {
    let n = b.dim();
    let r = b.rank();
    let mut u = Vec::with_capacity(n * (r + 2));
    u.extend_from_slice(b.cols_flat());
    u.extend_from_slice(extra[0]);
    u.extend_from_slice(extra[1]);
    (u, r + 2)
}

fn block_diag_c(offsets: &[f64], block: [[f64; 2]; 2]) -> SymMat {
    let r = offsets.len();
    let mut c = SymMat::zeros(r + 2);
    for (i, &o) in offsets.iter().enumerate() {
        c.set_sym(i, i, o);
    }
    c.set_sym(r, r, block[0][0]);
    c.set_sym(r, r + 1, block[0][1]);
    c.set_sym(r + 1, r + 1, block[1][1]);
    c
}

/// General Broyden-class update of `b` by `pair` with parameter `phi`.
///
/// For `phi != 1` the appended columns are `c_k = B s - (s^T B s *
/// phi / ((phi - 1) s^T y)) y` and `y`, with diagonal coefficients
/// `(phi - 1)/(s^T B s)` and `(1 - phi s^T B s/((phi - 1) s^T y))/(s^T y)`.
/// The DFP case `phi = 1` appends `B s` and `y` with a coupled 2 x 2 block.
pub fn broyden_update(
    b: &EigenLmMatrix,
    pair: &CurvaturePair,
    phi: f64,
) -> Result<CompactUpdate, UpdateError> {
    if !phi.is_finite() {
        return Err(UpdateError::NonFinitePhi(phi));
    }
    if pair.dim() != b.dim() {
        return Err(UpdateError::DimensionMismatch { expected: b.dim(), got: pair.dim() });
    }
    let sy = pair.curvature();
    if sy == 0.0 {
        return Err(UpdateError::ZeroCurvature);
    }
    let bs = b.matvec(&pair.s).expect("dimension checked");
    let sbs = dot(&pair.s, &bs);

    if (phi - 1.0).abs() < 1e-12 {
        // DFP: B + (1 + s^T B s / s^T y) y y^T / s^T y - (y s^T B + B s y^T)/s^T y
        let coupling = -1.0 / sy;
        let yy = (sbs / sy + 1.0) / sy;
        let (u, _) = stacked_factor(b, [&bs, &pair.y]);
        let c = block_diag_c(b.offsets(), [[0.0, coupling], [coupling, yy]]);
        return Ok(CompactUpdate { alpha: b.shift(), u, n: b.dim(), c });
    }

    if sbs == 0.0 {
        return Err(UpdateError::DegenerateQuadForm);
    }
    let mut ck = bs;
    let scale = sbs * phi / ((phi - 1.0) * sy);
    for (c, yi) in ck.iter_mut().zip(&pair.y) {
        *c -= scale * yi;
    }
    let cc = (phi - 1.0) / sbs;
    let yy = (1.0 - phi * sbs / (sy * (phi - 1.0))) / sy;
    let (u, _) = stacked_factor(b, [&ck, &pair.y]);
    let c = block_diag_c(b.offsets(), [[cc, 0.0], [0.0, yy]]);
    Ok(CompactUpdate { alpha: b.shift(), u, n: b.dim(), c })
}

/// Inverse BFGS update of an inverse-Hessian approximation `h`:
/// `H+ = (I - rho s y^T) H (I - rho y s^T) + rho s s^T` with
/// `rho = 1/(s^T y)`. By duality this is the DFP formula with the roles of
/// `s` and `y` exchanged, so it reuses the same compact block.
pub fn inverse_bfgs_update(
    h: &EigenLmMatrix,
    pair: &CurvaturePair,
) -> Result<CompactUpdate, UpdateError> {
    if pair.dim() != h.dim() {
        return Err(UpdateError::DimensionMismatch { expected: h.dim(), got: pair.dim() });
    }
    let sy = pair.curvature();
    if sy == 0.0 {
        return Err(UpdateError::ZeroCurvature);
    }
    let hy = h.matvec(&pair.y).expect("dimension checked");
    let yhy = dot(&pair.y, &hy);
    let coupling = -1.0 / sy;
    let ss = (yhy / sy + 1.0) / sy;
    let (u, _) = stacked_factor(h, [&hy, &pair.s]);
    let c = block_diag_c(h.offsets(), [[0.0, coupling], [coupling, ss]]);
    Ok(CompactUpdate { alpha: h.shift(), u, n: h.dim(), c })
}
