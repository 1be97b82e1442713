//! Dense brute-force reference implementations.
//!
//! Everything here recomputes results by the most literal route available:
//! full eigendecompositions, exhaustive window scans, textbook update
//! formulas, and bisection. The structured implementations are checked
//! against these in the test and acceptance suites, and the CLI can expose
//! them for spot verification. None of this code shares logic with the
//! structured paths beyond the basic dense kit; cost is O(n^3) per call and
//! guarded accordingly.

use thiserror::Error;

use crate::dense::{dot, norm2, DenseError, SymMat};
use crate::qnupdate::UpdateError;
use crate::reduction::Measure;

/// Largest dimension the dense oracles accept.
pub const ORACLE_GUARD: usize = 200;

const SWEEPS: usize = 100;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle guard exceeded: n = {n} > {guard}")]
    GuardExceeded { n: usize, guard: usize },
    #[error("matrix is not positive definite under a Stein measure")]
    PositivityViolation,
    #[error(transparent)]
    Dense(#[from] DenseError),
}

/// Globally optimal nearest matrix with an eigenvalue of multiplicity at
/// least `n - m`, within the family sharing `a`'s eigenvectors: dense
/// eigendecomposition plus an exhaustive scan of every consecutive window.
/// Returns the rebuilt dense matrix and the block loss of the chosen window.
pub fn dense_nearest(
    a: &SymMat,
    m: usize,
    measure: Measure,
) -> Result<(SymMat, f64), OracleError> {
    let n = a.dim();
    if n > ORACLE_GUARD {
        return Err(OracleError::GuardExceeded { n, guard: ORACLE_GUARD });
    }
    assert!(m < n, "need at least one eigenvalue in the window");
    let eig = a.eigen(SWEEPS)?;
    let vals = &eig.values;
    if measure.requires_positive_definite() && vals[0] <= 0.0 {
        return Err(OracleError::PositivityViolation);
    }
    let len = n - m;
    let mut best_start = 0usize;
    let mut best_mean = 0.0;
    let mut best_loss = f64::INFINITY;
    for start in 0..=m {
        let window = &vals[start..start + len];
        let mean = window_mean(window, measure);
        let loss = window_loss(window, mean, measure);
        if loss < best_loss {
            best_start = start;
            best_mean = mean;
            best_loss = loss;
        }
    }
    let mut new_vals = vals.clone();
    for v in new_vals[best_start..best_start + len].iter_mut() {
        *v = best_mean;
    }
    Ok((eig.reassemble(&new_vals), best_loss))
}

fn window_mean(window: &[f64], measure: Measure) -> f64 {
    let lo = window[0];
    let hi = window[window.len() - 1];
    if lo == hi {
        return lo;
    }
    let count = window.len() as f64;
    match measure {
        Measure::L2 => 0.5 * (lo + hi),
        Measure::Frobenius | Measure::InverseStein => window.iter().sum::<f64>() / count,
        Measure::Stein => count / window.iter().map(|v| 1.0 / v).sum::<f64>(),
        Measure::SymmetrizedStein => {
            let arith = window.iter().sum::<f64>() / count;
            let harm = count / window.iter().map(|v| 1.0 / v).sum::<f64>();
            (arith * harm).sqrt()
        }
    }
}

fn window_loss(window: &[f64], mean: f64, measure: Measure) -> f64 {
    match measure {
        Measure::L2 => window.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max),
        Measure::Frobenius => window.iter().map(|v| (v - mean) * (v - mean)).sum(),
        Measure::Stein => window.iter().map(|v| mean / v - (mean / v).ln()).sum(),
        Measure::InverseStein => window.iter().map(|v| v / mean - (v / mean).ln()).sum(),
        Measure::SymmetrizedStein => window.iter().map(|v| v / mean + mean / v).sum(),
    }
}

/// The matrix with `a`'s eigenvectors and `b`'s eigenvalues, matched in
/// ascending order on both sides.
pub fn aligned_matrix(a: &SymMat, b: &SymMat) -> Result<SymMat, OracleError> {
    assert_eq!(a.dim(), b.dim());
    let ea = a.eigen(SWEEPS)?;
    let eb = b.eigen(SWEEPS)?;
    Ok(ea.reassemble(&eb.values))
}

/// Full-matrix dissimilarity used by the alignment tests. The Stein-family
/// losses require positive definite arguments.
pub fn dense_distance(x: &SymMat, a: &SymMat, measure: Measure) -> Result<f64, OracleError> {
    assert_eq!(x.dim(), a.dim());
    match measure {
        Measure::L2 => {
            let eig = x.sub(a).eigen(SWEEPS)?;
            Ok(eig.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())))
        }
        Measure::Frobenius => Ok(x.sub(a).frob_norm()),
        Measure::Stein => stein_loss(x, a),
        Measure::InverseStein => stein_loss(a, x),
        Measure::SymmetrizedStein => {
            Ok(trace_solve(x, a)? + trace_solve(a, x)?)
        }
    }
}

/// tr(X^{ -1} A) via Cholesky solves.
fn trace_solve(x: &SymMat, a: &SymMat) -> Result<f64, OracleError> {
    let chol = x.cholesky().map_err(|_| OracleError::PositivityViolation)?;
    let n = x.dim();
    let mut tr = 0.0;
    let mut col = vec![0.0; n];
    for j in 0..n {
        for (i, c) in col.iter_mut().enumerate() {
            *c = a.get(i, j);
        }
        tr += chol.solve(&col)[j];
    }
    Ok(tr)
}

/// tr(X^{-1}A) - log det(X^{-1}A) - n.
pub fn stein_loss(x: &SymMat, a: &SymMat) -> Result<f64, OracleError> {
    let n = x.dim() as f64;
    let cx = x.cholesky().map_err(|_| OracleError::PositivityViolation)?;
    let ca = a.cholesky().map_err(|_| OracleError::PositivityViolation)?;
    Ok(trace_solve(x, a)? - (ca.log_det() - cx.log_det()) - n)
}

/// Dense Broyden-class update via the textbook family form
/// `B + y y^T/(s^T y) - B s s^T B/(s^T B s) + phi (s^T B s) v v^T` with
/// `v = y/(s^T y) - B s/(s^T B s)`; DFP (`phi = 1`) via its explicit
/// rank-two form to avoid the quadratic-form division.
pub fn dense_broyden(
    b: &SymMat,
    s: &[f64],
    y: &[f64],
    phi: f64,
) -> Result<SymMat, UpdateError> {
    let sy = dot(s, y);
    if sy == 0.0 {
        return Err(UpdateError::ZeroCurvature);
    }
    let bs = b.matvec(s);
    let sbs = dot(s, &bs);
    let mut out = b.clone();
    if (phi - 1.0).abs() < 1e-12 {
        out.add_outer((1.0 + sbs / sy) / sy, y);
        out.add_sym_outer(-1.0 / sy, y, &bs);
        return Ok(out);
    }
    if sbs == 0.0 {
        return Err(UpdateError::DegenerateQuadForm);
    }
    out.add_outer(1.0 / sy, y);
    out.add_outer(-1.0 / sbs, &bs);
    let v: Vec<f64> = y
        .iter()
        .zip(&bs)
        .map(|(yi, bi)| yi / sy - bi / sbs)
        .collect();
    out.add_outer(phi * sbs, &v);
    Ok(out)
}

/// Dense inverse BFGS update in product form:
/// `(I - rho s y^T) H (I - rho y s^T) + rho s s^T`, `rho = 1/(s^T y)`.
pub fn dense_inverse_bfgs(h: &SymMat, s: &[f64], y: &[f64]) -> Result<SymMat, UpdateError> {
    let sy = dot(s, y);
    if sy == 0.0 {
        return Err(UpdateError::ZeroCurvature);
    }
    let rho = 1.0 / sy;
    let n = h.dim();
    let hy = h.matvec(y);
    let yhy = dot(y, &hy);
    // expand: H - rho(s y^T H + H y s^T) + rho^2 (y^T H y) s s^T + rho s s^T
    let mut out = h.clone();
    out.add_sym_outer(-rho, s, &hy);
    out.add_outer(rho * rho * yhy + rho, s);
    debug_assert_eq!(out.dim(), n);
    Ok(out)
}

/// Solution of the dense trust-region subproblem by eigendecomposition and
/// bisection on the shift.
#[derive(Debug, Clone)]
pub struct DenseTrSolution {
    pub sigma: f64,
    pub p: Vec<f64>,
    /// Model value g^T p + p^T B p / 2 at the solution.
    pub q: f64,
}

/// Solve `min g^T p + p^T B p / 2  s.t. ||p|| <= d` densely. Interior,
/// boundary, and hard cases are separated exactly as the optimality
/// conditions dictate; boundary shifts are located by bisection to
/// `|(||p|| - d)| <= 1e-12 d`.
pub fn dense_tr_solve(b: &SymMat, g: &[f64], d: f64) -> DenseTrSolution {
    let n = b.dim();
    assert!(n <= ORACLE_GUARD, "oracle guard exceeded");
    assert!(d > 0.0 && norm2(g) > 0.0);
    let eig = b.eigen(SWEEPS).expect("dense eigensolver");
    let coeffs = eig.project(g); // V^T g
    let vals = &eig.values;
    let lambda1 = vals[0];
    let gnorm = norm2(g);

    let norm_at = |sigma: f64| -> f64 {
        coeffs
            .iter()
            .zip(vals)
            .map(|(c, l)| (c / (l + sigma)).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let assemble = |sigma: f64| -> Vec<f64> {
        let c: Vec<f64> =
            coeffs.iter().zip(vals).map(|(c, l)| -c / (l + sigma)).collect();
        eig.combine(&c)
    };
    let model = |p: &[f64]| -> f64 { dot(g, p) + 0.5 * dot(p, &b.matvec(p)) };

    if lambda1 > 0.0 {
        let pn0 = norm_at(0.0);
        if pn0 <= d {
            let p = assemble(0.0);
            let q = model(&p);
            return DenseTrSolution { sigma: 0.0, p, q };
        }
    }

    let sigma_lb = (-lambda1).max(0.0);
    if lambda1 <= 0.0 {
        // hard case: g orthogonal to the lambda_1 eigenspace and the
        // pseudo-inverse solution inside the ball
        let scale = lambda1.abs() + vals[n - 1].abs() + 1.0;
        let degenerate: Vec<bool> =
            vals.iter().map(|l| (l + sigma_lb).abs() <= 1e-12 * scale).collect();
        let orthogonal = degenerate
            .iter()
            .zip(&coeffs)
            .all(|(&deg, c)| !deg || c.abs() <= 1e-8 * gnorm);
        if orthogonal {
            let c: Vec<f64> = coeffs
                .iter()
                .zip(vals)
                .zip(&degenerate)
                .map(|((c, l), &deg)| if deg { 0.0 } else { -c / (l + sigma_lb) })
                .collect();
            let pstar = eig.combine(&c);
            let pstar_norm = norm2(&pstar);
            if pstar_norm <= d {
                let tau = (d * d - pstar_norm * pstar_norm).max(0.0).sqrt();
                let z = eig.vector(0);
                let p: Vec<f64> =
                    pstar.iter().zip(&z).map(|(a, b)| a + tau * b).collect();
                let q = model(&p);
                return DenseTrSolution { sigma: sigma_lb, p, q };
            }
        }
    }

    // boundary: ||p(sigma)|| is strictly decreasing on (sigma_lb, inf)
    let mut lo = sigma_lb;
    let mut hi = sigma_lb + gnorm / d;
    while norm_at(hi) > d {
        hi = sigma_lb + 2.0 * (hi - sigma_lb);
    }
    for _ in 0..500 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if norm_at(mid) > d {
            lo = mid;
        } else {
            hi = mid;
        }
        if (norm_at(mid) - d).abs() <= 1e-13 * d {
            break;
        }
    }
    // pick the endpoint closest to the ball surface; hi keeps ||p|| <= d
    let sigma = if (norm_at(hi) - d).abs() <= (norm_at(lo) - d).abs() { hi } else { lo };
    let p = assemble(sigma);
    let q = model(&p);
    DenseTrSolution { sigma, p, q }
}
