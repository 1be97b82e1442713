//! Trust-region subproblem solver exploiting the eigenpair structure.
//!
//! Minimizes `g^T p + p^T B p / 2` over `||p|| <= d` for `B = alpha*I +
//! E diag(offsets) E^T`. After one O(nr) projection of the gradient, the
//! entire shift search runs on r-dimensional data: both `||p(sigma)||` and
//! the Newton-step quadratic form are sums over the explicit eigenvalues
//! plus one term for the orthogonal complement. The solution vector is
//! assembled once at the end, again in O(nr).
//!
//! Boundary shifts are found with the Newton iteration of More & Sorensen on
//! `1/Delta - 1/||p(sigma)||` against a contracted radius `Delta =
//! d/(1 + eps)`, safeguarded by bisection toward `max(0, -lambda_1)`. The
//! hard case (gradient orthogonal to the bottom eigenspace with the
//! pseudo-inverse step inside the ball) is completed with an eigenvector of
//! the smallest eigenvalue: an explicit column when available, otherwise a
//! fixed-seed random vector orthogonalized against the stored columns.

use thiserror::Error;

use crate::dense::{axpy, dot, norm2};
use crate::lram::EigenLmMatrix;
use crate::rng::Rng;

/// Iteration cap for the boundary shift search.
pub const SIGMA_ITERATION_CAP: usize = 200;

/// Seed for the hard-case eigenvector draw when the smallest eigenvalue is
/// the implicit shift.
pub const HARD_CASE_SEED: u64 = 0x7452_5348;

#[derive(Debug, Error, PartialEq)]
pub enum TrSolveError {
    #[error("shifted system is singular or indefinite: denominator {denominator} at sigma {sigma}")]
    SingularShift { sigma: f64, denominator: f64 },
    #[error("shift search did not converge within {0} iterations")]
    MaxIterations(usize),
    #[error("trust-region radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("tolerance must lie in (0, 1), got {0}")]
    InvalidTolerance(f64),
    #[error("gradient is zero; subproblem is degenerate")]
    ZeroGradient,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Gradient split against the explicit eigenbasis: `h = E^T g` plus the norm
/// of the orthogonal remainder. The full gradient is retained for the final
/// assembly only; the shift search never touches it.
#[derive(Debug, Clone)]
pub struct ProjectedGradient {
    pub h: Vec<f64>,
    pub g_perp_norm: f64,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseTag {
    Interior,
    Boundary,
    HardCase,
}

#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub sigma: f64,
    pub p: Vec<f64>,
    pub case: CaseTag,
    /// Decrease of the quadratic model, `-(g^T p + p^T B p / 2)`.
    pub model_decrease: f64,
}

/// O(nr) gradient preparation: `h = E^T g`, `g_perp = g - E h`.
pub fn project_gradient(b: &EigenLmMatrix, g: &[f64]) -> ProjectedGradient {
    assert_eq!(g.len(), b.dim());
    let r = b.rank();
    let mut h = Vec::with_capacity(r);
    let mut perp = g.to_vec();
    for i in 0..r {
        let hi = dot(b.col(i), g);
        h.push(hi);
        axpy(-hi, b.col(i), &mut perp);
    }
    ProjectedGradient { h, g_perp_norm: norm2(&perp), g: g.to_vec() }
}

/// `||p(sigma)||` from r-dimensional data only.
pub fn p_norm(
    sigma: f64,
    alpha: f64,
    offsets: &[f64],
    pg: &ProjectedGradient,
) -> Result<f64, TrSolveError> {
    let d0 = alpha + sigma;
    if d0 <= 0.0 {
        return Err(TrSolveError::SingularShift { sigma, denominator: d0 });
    }
    let mut sum = (pg.g_perp_norm / d0).powi(2);
    for (o, h) in offsets.iter().zip(&pg.h) {
        let den = d0 + o;
        if den <= 0.0 {
            return Err(TrSolveError::SingularShift { sigma, denominator: den });
        }
        sum += (h / den).powi(2);
    }
    Ok(sum.sqrt())
}

/// `p(sigma)^T (B + sigma I)^{-1} p(sigma)`, the cubic-power companion of
/// [`p_norm`] used by the Newton step.
pub fn p_quadform(
    sigma: f64,
    alpha: f64,
    offsets: &[f64],
    pg: &ProjectedGradient,
) -> Result<f64, TrSolveError> {
    let d0 = alpha + sigma;
    if d0 <= 0.0 {
        return Err(TrSolveError::SingularShift { sigma, denominator: d0 });
    }
    let mut sum = pg.g_perp_norm.powi(2) / d0.powi(3);
    for (o, h) in offsets.iter().zip(&pg.h) {
        let den = d0 + o;
        if den <= 0.0 {
            return Err(TrSolveError::SingularShift { sigma, denominator: den });
        }
        sum += h.powi(2) / den.powi(3);
    }
    Ok(sum)
}

/// Pseudo-inverse norm at the critical shift: denominators at numerical zero
/// contribute nothing when their coefficient is negligible, infinity
/// otherwise.
fn pseudo_norm(sigma: f64, b: &EigenLmMatrix, pg: &ProjectedGradient, gnorm: f64) -> f64 {
    let alpha = b.shift();
    let den_tol = degenerate_tol(sigma, b);
    let coeff_tol = 1e-8 * gnorm;
    let mut sum = 0.0;
    let d0 = alpha + sigma;
    if d0.abs() <= den_tol {
        if pg.g_perp_norm > coeff_tol {
            return f64::INFINITY;
        }
    } else {
        sum += (pg.g_perp_norm / d0).powi(2);
    }
    for (o, h) in b.offsets().iter().zip(&pg.h) {
        let den = d0 + o;
        if den.abs() <= den_tol {
            if h.abs() > coeff_tol {
                return f64::INFINITY;
            }
        } else {
            sum += (h / den).powi(2);
        }
    }
    sum.sqrt()
}

fn degenerate_tol(sigma: f64, b: &EigenLmMatrix) -> f64 {
    let spread = b
        .offsets()
        .iter()
        .fold(0.0_f64, |acc, o| acc.max(o.abs()));
    1e-13 * (b.shift().abs() + sigma + spread + 1.0)
}

/// Assemble `p = -g_perp/(alpha+sigma) - E ((alpha+sigma) I +
/// diag(offsets))^{-1} h`, skipping numerically-singular components (the
/// hard case zeroes them by construction).
fn assemble(sigma: f64, b: &EigenLmMatrix, pg: &ProjectedGradient) -> Vec<f64> {
    let alpha = b.shift();
    let den_tol = degenerate_tol(sigma, b);
    let d0 = alpha + sigma;
    let perp_coeff = if d0.abs() <= den_tol { 0.0 } else { -1.0 / d0 };
    // p = perp_coeff * (g - E h) + sum_i w_i col_i
    let mut p: Vec<f64> = pg.g.iter().map(|v| perp_coeff * v).collect();
    for i in 0..b.rank() {
        let den = d0 + b.offsets()[i];
        let w = if den.abs() <= den_tol { 0.0 } else { -pg.h[i] / den };
        axpy(w - perp_coeff * pg.h[i], b.col(i), &mut p);
    }
    p
}

fn model_decrease(b: &EigenLmMatrix, g: &[f64], p: &[f64]) -> f64 {
    let bp = b.matvec(p).expect("dimensions checked");
    -(dot(g, p) + 0.5 * dot(p, &bp))
}

/// Solve the subproblem to relative boundary tolerance `eps`.
pub fn solve_subproblem(
    b: &EigenLmMatrix,
    g: &[f64],
    radius: f64,
    eps: f64,
) -> Result<SubproblemSolution, TrSolveError> {
    if g.len() != b.dim() {
        return Err(TrSolveError::DimensionMismatch { expected: b.dim(), got: g.len() });
    }
    if !radius.is_finite() || radius <= 0.0 {
        return Err(TrSolveError::InvalidRadius(radius));
    }
    if !(eps > 0.0 && eps < 1.0) {
        // also rejects NaN
        return Err(TrSolveError::InvalidTolerance(eps));
    }
    let gnorm = norm2(g);
    if gnorm == 0.0 {
        return Err(TrSolveError::ZeroGradient);
    }

    let pg = project_gradient(b, g);
    let alpha = b.shift();
    let offsets = b.offsets();
    let lambda1 = b.min_eigenvalue();

    if lambda1 > 0.0 {
        let pn0 = p_norm(0.0, alpha, offsets, &pg)?;
        if pn0 <= radius {
            let p = assemble(0.0, b, &pg);
            let decrease = model_decrease(b, g, &p);
            return Ok(SubproblemSolution {
                sigma: 0.0,
                p,
                case: CaseTag::Interior,
                model_decrease: decrease,
            });
        }
    }

    let sigma_lb = (-lambda1).max(0.0);
    if lambda1 <= 0.0 {
        let pstar_norm = pseudo_norm(sigma_lb, b, &pg, gnorm);
        if pstar_norm <= radius {
            let mut p = assemble(sigma_lb, b, &pg);
            let tau = (radius * radius - pstar_norm * pstar_norm).max(0.0).sqrt();
            let z = bottom_eigenvector(b);
            axpy(tau, &z, &mut p);
            let decrease = model_decrease(b, g, &p);
            return Ok(SubproblemSolution {
                sigma: sigma_lb,
                p,
                case: CaseTag::HardCase,
                model_decrease: decrease,
            });
        }
    }

    // Boundary: Newton on 1/Delta - 1/||p(sigma)|| with bisection safeguard.
    let delta = radius / (1.0 + eps);
    let mut sigma = sigma_lb + gnorm / radius;
    for _ in 0..SIGMA_ITERATION_CAP {
        let pn = p_norm(sigma, alpha, offsets, &pg)?;
        if (pn - delta).abs() / delta <= eps {
            let p = assemble(sigma, b, &pg);
            let decrease = model_decrease(b, g, &p);
            return Ok(SubproblemSolution {
                sigma,
                p,
                case: CaseTag::Boundary,
                model_decrease: decrease,
            });
        }
        let qf = p_quadform(sigma, alpha, offsets, &pg)?;
        let trial = sigma + (pn * pn / qf) * ((pn - delta) / delta);
        if trial <= sigma_lb {
            sigma = 0.5 * (sigma + sigma_lb);
        } else {
            sigma = trial;
        }
    }
    Err(TrSolveError::MaxIterations(SIGMA_ITERATION_CAP))
}

/// Eigenvector for the smallest eigenvalue: the matching explicit column
/// when the minimum is explicit, otherwise a seeded random draw
/// orthogonalized against every stored column (the implicit eigenspace is
/// the whole orthogonal complement).
fn bottom_eigenvector(b: &EigenLmMatrix) -> Vec<f64> {
    let lambda1 = b.min_eigenvalue();
    for i in 0..b.rank() {
        if b.eigenvalue(i) == lambda1 {
            return b.col(i).to_vec();
        }
    }
    let mut rng = Rng::new(HARD_CASE_SEED);
    loop {
        let mut z = rng.normal_vec(b.dim());
        for i in 0..b.rank() {
            let c = dot(&z, b.col(i));
            axpy(-c, b.col(i), &mut z);
        }
        let zn = norm2(&z);
        if zn > 1e-8 {
            for v in z.iter_mut() {
                *v /= zn;
            }
            return z;
        }
    }
}
