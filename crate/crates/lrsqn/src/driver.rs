//! The trust-region optimizer loop.
//!
//! Each iteration: (1) if a curvature pair from the last accepted step
//! passes the skip rule, apply the BFGS update and refresh the eigenpair
//! form, giving a matrix of rank at most m+2; (2) solve the trust-region
//! subproblem with the updated matrix, which is the one guaranteed to
//! satisfy the secant equation; (3) accept or reject the trial point on the
//! ared/pred ratio and rescale the radius; (4) reduce the matrix back to the
//! memory budget under the configured dissimilarity measure. On rejected
//! steps the updated-and-reduced matrix is kept and no second update with
//! the same pair is performed.
//!
//! The loop is exposed two ways: [`minimize`] drives an [`Objective`] to
//! convergence, while the [`Optimizer`] state machine splits each iteration
//! into `propose` (update + subproblem solve) and `commit` (ratio test +
//! reduction) so a host can evaluate the objective and gradient of the trial
//! point concurrently with the finalization work.

use std::io::Write;
use std::time::Instant;

use thiserror::Error;

use crate::dense::norm2;
use crate::eigupdate::EigUpdateError;
use crate::lram::EigenLmMatrix;
use crate::qnupdate::{broyden_update, curvature_check, CurvaturePair, UpdateError};
use crate::reduction::{reduce, Measure, ReduceError};
use crate::trsolve::{solve_subproblem, TrSolveError};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("objective or gradient evaluation produced a non-finite value")]
    ObjectiveFailure,
    #[error(transparent)]
    Reduction(#[from] ReduceError),
    #[error(transparent)]
    TrustRegion(#[from] TrSolveError),
    #[error(transparent)]
    Update(#[from] UpdateError),
    #[error(transparent)]
    EigUpdate(#[from] EigUpdateError),
    #[error("optimizer protocol violation: {0}")]
    Protocol(&'static str),
}

/// Objective function interface: value, gradient, dimension.
pub trait Objective {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> Vec<f64>;
}

/// Trust-region optimizer configuration.
///
/// `memory` is the number of stored eigenpairs at the start of an iteration
/// (the low-rank factor transiently grows to `memory + 2` inside one).
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub memory: usize,
    pub measure: Measure,
    /// Reject threshold for ared/pred.
    pub eta1: f64,
    /// Expand threshold for ared/pred.
    pub eta2: f64,
    /// Radius shrink factor on rejection.
    pub gamma1: f64,
    /// Radius growth factor on strong agreement.
    pub gamma2: f64,
    /// Relative boundary tolerance of the subproblem solver.
    pub tr_tol: f64,
    /// Update skip threshold: require s^T y >= eps ||s|| ||y||.
    pub curvature_tol: f64,
    /// Pivot drop threshold of the eigendecomposition refresh.
    pub nu: f64,
    pub initial_radius: f64,
    pub max_iter: usize,
    pub grad_tol_abs: f64,
    pub grad_tol_rel_grad: f64,
    pub grad_tol_rel_f: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            memory: 5,
            measure: Measure::Frobenius,
            eta1: 0.1,
            eta2: 0.75,
            gamma1: 0.5,
            gamma2: 2.0,
            tr_tol: 1e-4,
            curvature_tol: 1e-8,
            nu: 0.0,
            initial_radius: 1.0,
            max_iter: 1000,
            grad_tol_abs: 1e-5,
            grad_tol_rel_grad: 1e-6,
            grad_tol_rel_f: 1e-6,
        }
    }
}

impl OptimizerConfig {
    /// Validate the parameter ranges and the measure-specific dimension
    /// bounds that rule out structural splits during in-loop reduction.
    /// The bounds only apply when the budget can bind (`memory < n`).
    pub fn validate(&self, n: usize) -> Result<(), DriverError> {
        let bad = |msg: String| Err(DriverError::InvalidConfig(msg));
        if self.memory == 0 {
            return bad("memory budget m must be at least 1".into());
        }
        if !(0.0 < self.eta1 && self.eta1 < self.eta2 && self.eta2 < 1.0) {
            return bad(format!("need 0 < eta1 < eta2 < 1, got {} and {}", self.eta1, self.eta2));
        }
        if !(0.0 < self.gamma1 && self.gamma1 < 1.0 && self.gamma2 > 1.0) {
            return bad(format!(
                "need 0 < gamma1 < 1 < gamma2, got {} and {}",
                self.gamma1, self.gamma2
            ));
        }
        if !(self.tr_tol > 0.0 && self.tr_tol < 1.0) {
            return bad(format!("trust-region tolerance must be in (0,1), got {}", self.tr_tol));
        }
        if self.curvature_tol < 0.0 || self.nu < 0.0 {
            return bad("curvature tolerance and nu must be nonnegative".into());
        }
        if !self.initial_radius.is_finite() || self.initial_radius <= 0.0 {
            return bad(format!("initial radius must be positive, got {}", self.initial_radius));
        }
        if self.grad_tol_abs < 0.0 || self.grad_tol_rel_grad < 0.0 || self.grad_tol_rel_f < 0.0 {
            return bad("gradient tolerances must be nonnegative".into());
        }
        if self.memory < n {
            let m = self.memory;
            match self.measure {
                Measure::L2 if n <= 2 * m + 2 => {
                    return bad(format!(
                        "l2 reduction needs n > 2m+2 to keep the shift run intact (n={n}, m={m})"
                    ));
                }
                Measure::Frobenius if n < 2 * m + 4 => {
                    return bad(format!(
                        "frobenius reduction needs n >= 2m+4 to keep the shift run intact (n={n}, m={m})"
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn grad_threshold(&self, g0_norm: f64, f0: f64) -> f64 {
        self.grad_tol_abs
            .max(self.grad_tol_rel_grad * g0_norm)
            .max(self.grad_tol_rel_f * f0.abs())
    }
}

/// One trace row per iteration; `f` and `gnorm` describe the state at the
/// end of the iteration.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub f: f64,
    pub gnorm: f64,
    pub radius: f64,
    pub sigma: f64,
    pub accepted: bool,
    pub ratio: f64,
    pub rank: usize,
    pub reduction_loss: f64,
    pub wall_ms: f64,
}

pub const TRACE_CSV_HEADER: &str =
    "iter,f,gnorm,radius,sigma,accepted,ratio,rank,reduction_loss,wall_ms";

pub fn write_trace_csv(
    records: &[IterationRecord],
    w: &mut (impl Write + ?Sized),
) -> std::io::Result<()> {
    writeln!(w, "{TRACE_CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.iter,
            r.f,
            r.gnorm,
            r.radius,
            r.sigma,
            r.accepted,
            r.ratio,
            r.rank,
            r.reduction_loss,
            r.wall_ms
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Converged,
    MaxIterations,
    Aborted(AbortReason),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AbortReason {
    ObjectiveFailure,
    StructuralSplit(String),
    Numerical(String),
}

impl RunStatus {
    pub fn converged(&self) -> bool {
        matches!(self, RunStatus::Converged)
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub gnorm: f64,
    pub iterations: usize,
    pub status: RunStatus,
    pub trace: Vec<IterationRecord>,
}

/// Trial point handed back by [`Optimizer::propose`].
#[derive(Debug, Clone)]
pub struct Proposal {
    pub x_trial: Vec<f64>,
}

/// Outcome of [`Optimizer::commit`].
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub accepted: bool,
    /// The caller must supply the gradient at the (accepted) new iterate
    /// via [`Optimizer::set_gradient`] before the next proposal.
    pub needs_gradient: bool,
    pub ratio: f64,
    /// Loss of the in-loop reduction; zero when the budget did not bind.
    pub reduction_loss: f64,
    /// True when the reduction actually cut the stored rank.
    pub reduced: bool,
}

enum Phase {
    Ready,
    Proposed(PendingStep),
    AwaitGradient { started: Instant, sigma: f64, ratio: f64, reduction_loss: f64 },
    Finished,
}

struct PendingStep {
    started: Instant,
    bhat: EigenLmMatrix,
    x_trial: Vec<f64>,
    p: Vec<f64>,
    sigma: f64,
    pred: f64,
    boundary: bool,
}

/// The optimizer state machine. `propose` runs the quasi-Newton update and
/// the subproblem solve; `commit` applies the ratio test and the memory
/// reduction; accepted steps then need `set_gradient` before the next
/// proposal.
pub struct Optimizer {
    cfg: OptimizerConfig,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    gnorm: f64,
    b: EigenLmMatrix,
    radius: f64,
    k: usize,
    threshold: f64,
    pending_pair: Option<CurvaturePair>,
    last_applied_pair: Option<CurvaturePair>,
    // stashed between commit(accept) and set_gradient
    prev_gradient: Option<Vec<f64>>,
    step: Option<Vec<f64>>,
    phase: Phase,
    status: Option<RunStatus>,
    trace: Vec<IterationRecord>,
}

impl Optimizer {
    /// Start a run at `x0` with its objective value and gradient already
    /// evaluated.
    pub fn new(
        cfg: OptimizerConfig,
        x0: Vec<f64>,
        f0: f64,
        g0: Vec<f64>,
    ) -> Result<Self, DriverError> {
        let n = x0.len();
        cfg.validate(n)?;
        if g0.len() != n {
            return Err(DriverError::InvalidConfig(format!(
                "gradient length {} does not match x0 length {n}",
                g0.len()
            )));
        }
        if !f0.is_finite() || g0.iter().any(|v| !v.is_finite()) {
            return Err(DriverError::ObjectiveFailure);
        }
        let gnorm = norm2(&g0);
        let threshold = cfg.grad_threshold(gnorm, f0);
        let radius = cfg.initial_radius;
        let max_iter = cfg.max_iter;
        let mut opt = Optimizer {
            cfg,
            x: x0,
            f: f0,
            g: g0,
            gnorm,
            b: EigenLmMatrix::shifted_identity(n, 1.0),
            radius,
            k: 0,
            threshold,
            pending_pair: None,
            last_applied_pair: None,
            prev_gradient: None,
            step: None,
            phase: Phase::Ready,
            status: None,
            trace: Vec::new(),
        };
        if opt.gnorm <= opt.threshold {
            opt.finish(RunStatus::Converged);
        } else if max_iter == 0 {
            opt.finish(RunStatus::MaxIterations);
        }
        Ok(opt)
    }

    fn finish(&mut self, status: RunStatus) {
        self.status = Some(status);
        self.phase = Phase::Finished;
    }

    pub fn finished(&self) -> Option<&RunStatus> {
        self.status.as_ref()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn f(&self) -> f64 {
        self.f
    }

    pub fn gradient_norm(&self) -> f64 {
        self.gnorm
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn iterations(&self) -> usize {
        self.k
    }

    pub fn hessian(&self) -> &EigenLmMatrix {
        &self.b
    }

    pub fn trace(&self) -> &[IterationRecord] {
        &self.trace
    }

    pub fn into_trace(self) -> Vec<IterationRecord> {
        self.trace
    }

    /// The curvature pair consumed by the most recent proposal, when the
    /// update was actually applied.
    pub fn last_applied_pair(&self) -> Option<&CurvaturePair> {
        self.last_applied_pair.as_ref()
    }

    /// The updated (not yet reduced) matrix backing the pending proposal.
    pub fn proposed_hessian(&self) -> Option<&EigenLmMatrix> {
        match &self.phase {
            Phase::Proposed(p) => Some(&p.bhat),
            _ => None,
        }
    }

    /// Run the quasi-Newton update (when a usable pair is pending) and solve
    /// the trust-region subproblem; returns the trial point.
    pub fn propose(&mut self) -> Result<Proposal, DriverError> {
        if !matches!(self.phase, Phase::Ready) {
            return Err(DriverError::Protocol("propose requires the Ready phase"));
        }
        let started = Instant::now();
        self.last_applied_pair = None;
        let bhat = match self.pending_pair.take() {
            Some(pair)
                if curvature_check(&pair, self.cfg.curvature_tol) && pair.curvature() > 0.0 =>
            {
                let compact = broyden_update(&self.b, &pair, 0.0)?;
                let updated = compact.recompose(self.cfg.nu)?;
                self.last_applied_pair = Some(pair);
                updated
            }
            _ => self.b.clone(),
        };
        let sol = solve_subproblem(&bhat, &self.g, self.radius, self.cfg.tr_tol)?;
        let pred = -sol.model_decrease;
        let x_trial: Vec<f64> = self.x.iter().zip(&sol.p).map(|(a, b)| a + b).collect();
        let proposal = Proposal { x_trial: x_trial.clone() };
        self.phase = Phase::Proposed(PendingStep {
            started,
            bhat,
            x_trial,
            p: sol.p,
            sigma: sol.sigma,
            pred,
            boundary: !matches!(sol.case, crate::trsolve::CaseTag::Interior),
        });
        Ok(proposal)
    }

    /// Apply the ratio test for the proposed step and reduce the updated
    /// matrix back to the budget.
    pub fn commit(&mut self, f_trial: f64) -> Result<StepOutcome, DriverError> {
        let pending = match std::mem::replace(&mut self.phase, Phase::Ready) {
            Phase::Proposed(p) => p,
            other => {
                self.phase = other;
                return Err(DriverError::Protocol("commit requires a pending proposal"));
            }
        };
        if !f_trial.is_finite() {
            self.finish(RunStatus::Aborted(AbortReason::ObjectiveFailure));
            return Err(DriverError::ObjectiveFailure);
        }
        let ared = f_trial - self.f;
        let ratio = ared / pending.pred;
        let accepted = ratio.is_finite() && ratio >= self.cfg.eta1;
        if accepted {
            // Growing the radius is only useful when the step was clamped by
            // it; inflating it on interior steps just forces long rejection
            // cascades once the model degrades.
            if ratio > self.cfg.eta2 && pending.boundary {
                self.radius *= self.cfg.gamma2;
            }
        } else {
            self.radius *= self.cfg.gamma1;
        }

        // Reduce the updated matrix whether or not the step was accepted.
        let before_rank = pending.bhat.rank();
        let (reduced_matrix, reduction_loss) = if before_rank > self.cfg.memory {
            let red = match reduce(&pending.bhat, self.cfg.memory, self.cfg.measure) {
                Ok(red) => red,
                Err(err) => {
                    let reason = match &err {
                        ReduceError::StructuralSplit { .. } => {
                            AbortReason::StructuralSplit(err.to_string())
                        }
                        _ => AbortReason::Numerical(err.to_string()),
                    };
                    self.finish(RunStatus::Aborted(reason));
                    return Err(err.into());
                }
            };
            (red.matrix, red.loss)
        } else {
            (pending.bhat, 0.0)
        };
        let reduced = reduced_matrix.rank() < before_rank;
        self.b = reduced_matrix;
        self.k += 1;

        if accepted {
            self.prev_gradient = Some(std::mem::take(&mut self.g));
            self.step = Some(pending.p);
            self.x = pending.x_trial;
            self.f = f_trial;
            self.phase = Phase::AwaitGradient {
                started: pending.started,
                sigma: pending.sigma,
                ratio,
                reduction_loss,
            };
        } else {
            let wall_ms = pending.started.elapsed().as_secs_f64() * 1e3;
            self.trace.push(IterationRecord {
                iter: self.k - 1,
                f: self.f,
                gnorm: self.gnorm,
                radius: self.radius,
                sigma: pending.sigma,
                accepted: false,
                ratio,
                rank: self.b.rank(),
                reduction_loss,
                wall_ms,
            });
            if self.k >= self.cfg.max_iter {
                self.finish(RunStatus::MaxIterations);
            }
        }
        Ok(StepOutcome {
            accepted,
            needs_gradient: accepted,
            ratio,
            reduction_loss,
            reduced,
        })
    }

    /// Provide the gradient at the accepted iterate; forms the next
    /// curvature pair and finishes the iteration record.
    pub fn set_gradient(&mut self, g_new: Vec<f64>) -> Result<(), DriverError> {
        let (started, sigma, ratio, reduction_loss) = match self.phase {
            Phase::AwaitGradient { started, sigma, ratio, reduction_loss } => {
                (started, sigma, ratio, reduction_loss)
            }
            _ => return Err(DriverError::Protocol("set_gradient without an accepted step")),
        };
        if g_new.len() != self.x.len() {
            return Err(DriverError::InvalidConfig(format!(
                "gradient length {} does not match dimension {}",
                g_new.len(),
                self.x.len()
            )));
        }
        if g_new.iter().any(|v| !v.is_finite()) {
            self.finish(RunStatus::Aborted(AbortReason::ObjectiveFailure));
            return Err(DriverError::ObjectiveFailure);
        }
        let g_prev = self.prev_gradient.take().expect("stashed at commit");
        let s = self.step.take().expect("stashed at commit");
        let y: Vec<f64> = g_new.iter().zip(&g_prev).map(|(a, b)| a - b).collect();
        self.pending_pair = Some(CurvaturePair::new(s, y));
        self.g = g_new;
        self.gnorm = norm2(&self.g);
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        self.trace.push(IterationRecord {
            iter: self.k - 1,
            f: self.f,
            gnorm: self.gnorm,
            radius: self.radius,
            sigma,
            accepted: true,
            ratio,
            rank: self.b.rank(),
            reduction_loss,
            wall_ms,
        });
        self.phase = Phase::Ready;
        if self.gnorm <= self.threshold {
            self.finish(RunStatus::Converged);
        } else if self.k >= self.cfg.max_iter {
            self.finish(RunStatus::MaxIterations);
        }
        Ok(())
    }
}

/// Drive an [`Objective`] to convergence. Aborts (objective failures,
/// structural splits, subproblem breakdowns) are reported in the returned
/// status together with the partial trace; only configuration errors fail
/// the call itself.
pub fn minimize<O: Objective + ?Sized>(
    obj: &O,
    x0: &[f64],
    cfg: OptimizerConfig,
) -> Result<MinimizeResult, DriverError> {
    if obj.dim() != x0.len() {
        return Err(DriverError::InvalidConfig(format!(
            "objective dimension {} does not match x0 length {}",
            obj.dim(),
            x0.len()
        )));
    }
    let f0 = obj.eval(x0);
    let g0 = obj.grad(x0);
    if !f0.is_finite() || g0.iter().any(|v| !v.is_finite()) {
        return Err(DriverError::ObjectiveFailure);
    }
    let mut opt = Optimizer::new(cfg, x0.to_vec(), f0, g0)?;
    while opt.finished().is_none() {
        let step_result = (|| -> Result<(), DriverError> {
            let proposal = opt.propose()?;
            let f_trial = obj.eval(&proposal.x_trial);
            let outcome = opt.commit(f_trial)?;
            if outcome.needs_gradient {
                let g_new = obj.grad(opt.x());
                opt.set_gradient(g_new)?;
            }
            Ok(())
        })();
        if let Err(err) = step_result {
            if opt.finished().is_none() {
                let reason = match err {
                    DriverError::ObjectiveFailure => AbortReason::ObjectiveFailure,
                    DriverError::Reduction(ReduceError::StructuralSplit { .. }) => {
                        AbortReason::StructuralSplit(err.to_string())
                    }
                    other => AbortReason::Numerical(other.to_string()),
                };
                opt.finish(RunStatus::Aborted(reason));
            }
            break;
        }
    }
    let status = opt.finished().cloned().expect("loop exits only when finished");
    Ok(MinimizeResult {
        x: opt.x.clone(),
        f: opt.f,
        gnorm: opt.gnorm,
        iterations: opt.k,
        status,
        trace: opt.trace,
    })
}

/// Run with a budget large enough that reduction never binds and compare
/// the eigenpair Hessian against a dense BFGS recursion fed the same pairs.
#[derive(Debug)]
pub struct FullMemoryReport {
    pub result: MinimizeResult,
    /// Relative Frobenius error of the eigenpair matrix against dense BFGS,
    /// one entry per iteration.
    pub per_iteration_error: Vec<f64>,
}

pub fn full_memory_equivalence_mode<O: Objective + ?Sized>(
    obj: &O,
    x0: &[f64],
    cfg: OptimizerConfig,
) -> Result<FullMemoryReport, DriverError> {
    use crate::dense::SymMat;
    use crate::oracle::dense_broyden;

    let n = x0.len();
    let f0 = obj.eval(x0);
    let g0 = obj.grad(x0);
    let mut opt = Optimizer::new(cfg, x0.to_vec(), f0, g0)?;
    let mut shadow = SymMat::identity(n);
    let mut errors = Vec::new();
    while opt.finished().is_none() {
        let proposal = opt.propose()?;
        if let Some(pair) = opt.last_applied_pair() {
            shadow = dense_broyden(&shadow, &pair.s, &pair.y, 0.0)?;
        }
        let f_trial = obj.eval(&proposal.x_trial);
        let outcome = opt.commit(f_trial)?;
        if outcome.reduced {
            return Err(DriverError::InvalidConfig(
                "memory budget binds; full-memory equivalence requires a non-binding budget"
                    .into(),
            ));
        }
        if outcome.needs_gradient {
            let g_new = obj.grad(opt.x());
            opt.set_gradient(g_new)?;
        }
        let dense = opt.hessian().to_dense().map_err(|e| {
            DriverError::InvalidConfig(format!("dimension too large to compare densely: {e}"))
        })?;
        let scale = shadow.frob_norm().max(1.0);
        errors.push(dense.sub(&shadow).frob_norm() / scale);
    }
    let status = opt.finished().cloned().expect("finished");
    Ok(FullMemoryReport {
        result: MinimizeResult {
            x: opt.x.clone(),
            f: opt.f,
            gnorm: opt.gnorm,
            iterations: opt.k,
            status,
            trace: opt.trace,
        },
        per_iteration_error: errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Rosenbrock;

    struct SphereHalf;

    impl Objective for SphereHalf {
        fn dim(&self) -> usize {
            4
        }
        fn eval(&self, x: &[f64]) -> f64 {
            0.5 * x.iter().map(|v| v * v).sum::<f64>()
        }
        fn grad(&self, x: &[f64]) -> Vec<f64> {
            x.to_vec()
        }
    }

    fn quadratic_config(m: usize) -> OptimizerConfig {
        OptimizerConfig { memory: m, max_iter: 100, ..OptimizerConfig::default() }
    }

    #[test]
    fn sphere_converges_immediately() {
        // B0 = I is the exact Hessian, so the first accepted step lands at 0
        let cfg = OptimizerConfig {
            memory: 4,
            grad_tol_abs: 1e-10,
            ..quadratic_config(4)
        };
        let mut x0 = vec![0.0; 4];
        x0[0] = 1.0;
        let res = minimize(&SphereHalf, &x0, cfg).unwrap();
        assert!(res.status.converged(), "{:?}", res.status);
        assert!(res.iterations <= 5, "took {} iterations", res.iterations);
        assert!(res.gnorm <= 1e-10);
    }

    #[test]
    fn rosenbrock_reaches_minimum() {
        let cfg = OptimizerConfig {
            memory: 2,
            max_iter: 500,
            grad_tol_abs: 1e-7,
            ..OptimizerConfig::default()
        };
        let obj = Rosenbrock::new(2);
        let res = minimize(&obj, &[-1.2, 1.0], cfg).unwrap();
        assert!(res.status.converged(), "{:?}", res.status);
        assert!(res.f < 1e-8, "f = {}", res.f);
        assert!((res.x[0] - 1.0).abs() < 1e-3 && (res.x[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn config_validation_rejects_bad_parameters() {
        let cfg = OptimizerConfig { memory: 0, ..OptimizerConfig::default() };
        assert!(matches!(cfg.validate(10), Err(DriverError::InvalidConfig(_))));

        let cfg = OptimizerConfig { eta1: 0.8, eta2: 0.5, ..OptimizerConfig::default() };
        assert!(cfg.validate(100).is_err());

        // l2 requires n > 2m + 2 when the budget binds
        let cfg = OptimizerConfig { memory: 5, measure: Measure::L2, ..Default::default() };
        assert!(cfg.validate(12).is_err());
        assert!(cfg.validate(13).is_ok());

        // frobenius requires n >= 2m + 4
        let cfg =
            OptimizerConfig { memory: 5, measure: Measure::Frobenius, ..Default::default() };
        assert!(cfg.validate(13).is_err());
        assert!(cfg.validate(14).is_ok());

        // a non-binding budget is exempt
        let cfg = OptimizerConfig { memory: 2, measure: Measure::L2, ..Default::default() };
        assert!(cfg.validate(2).is_ok());
    }

    #[test]
    fn monotone_acceptance_and_memory_bound() {
        let cfg = OptimizerConfig {
            memory: 2,
            max_iter: 200,
            grad_tol_abs: 1e-9,
            ..OptimizerConfig::default()
        };
        let obj = Rosenbrock::new(8);
        let x0 = vec![-1.2, 1.0, -1.2, 1.0, -1.2, 1.0, -1.2, 1.0];
        let res = minimize(&obj, &x0, cfg).unwrap();
        let mut f_prev = obj.eval(&x0);
        for rec in &res.trace {
            if rec.accepted {
                assert!(rec.f <= f_prev + 1e-12, "accepted step increased f");
                f_prev = rec.f;
            } else {
                assert_eq!(rec.f, f_prev);
            }
            assert!(rec.rank <= 2, "rank {} above budget", rec.rank);
        }
    }

    #[test]
    fn maxiter_flag() {
        let cfg = OptimizerConfig {
            memory: 2,
            max_iter: 3,
            grad_tol_abs: 1e-14,
            grad_tol_rel_grad: 0.0,
            grad_tol_rel_f: 0.0,
            ..OptimizerConfig::default()
        };
        let obj = Rosenbrock::new(2);
        let res = minimize(&obj, &[-1.2, 1.0], cfg).unwrap();
        assert_eq!(res.status, RunStatus::MaxIterations);
        assert_eq!(res.iterations, 3);
    }

    #[test]
    fn objective_failure_aborts_with_partial_trace() {
        struct Poison;
        impl Objective for Poison {
            fn dim(&self) -> usize {
                6
            }
            fn eval(&self, x: &[f64]) -> f64 {
                if x[0] > 2.0 {
                    f64::NAN
                } else {
                    // steep along x0 so iterates march into the poisoned region
                    -x[0] + 0.01 * x[1..].iter().map(|v| v * v).sum::<f64>()
                }
            }
            fn grad(&self, x: &[f64]) -> Vec<f64> {
                let mut g: Vec<f64> = x.iter().map(|v| 0.02 * v).collect();
                g[0] = -1.0;
                g
            }
        }
        let cfg = OptimizerConfig { memory: 1, max_iter: 100, ..Default::default() };
        let res = minimize(&Poison, &[0.0; 6], cfg).unwrap();
        assert_eq!(res.status, RunStatus::Aborted(AbortReason::ObjectiveFailure));
    }

    #[test]
    fn gradient_failure_at_accepted_point_aborts() {
        struct BadGradient;
        impl Objective for BadGradient {
            fn dim(&self) -> usize {
                6
            }
            fn eval(&self, x: &[f64]) -> f64 {
                0.5 * x.iter().map(|v| v * v).sum::<f64>()
            }
            fn grad(&self, x: &[f64]) -> Vec<f64> {
                // poisoned once the iterate moves off the start
                if (x[0] - 1.0).abs() > 1e-9 {
                    vec![f64::NAN; 6]
                } else {
                    x.to_vec()
                }
            }
        }
        let cfg = OptimizerConfig { memory: 1, max_iter: 50, ..Default::default() };
        let res = minimize(&BadGradient, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0], cfg).unwrap();
        assert_eq!(res.status, RunStatus::Aborted(AbortReason::ObjectiveFailure));
    }

    #[test]
    fn full_memory_mode_zero_iterations_keeps_identity() {
        let cfg = OptimizerConfig {
            memory: 64,
            max_iter: 0,
            ..OptimizerConfig::default()
        };
        let report = full_memory_equivalence_mode(&SphereHalf, &[1.0, 1.0, 1.0, 1.0], cfg)
            .unwrap();
        assert!(report.per_iteration_error.is_empty());
        assert_eq!(report.result.iterations, 0);
    }

    #[test]
    fn trace_csv_shape() {
        let cfg = quadratic_config(2);
        let obj = Rosenbrock::new(2);
        let res = minimize(&obj, &[-1.2, 1.0], cfg).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&res.trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TRACE_CSV_HEADER);
        assert_eq!(lines.count(), res.trace.len());
    }
}
