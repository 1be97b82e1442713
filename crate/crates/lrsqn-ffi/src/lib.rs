//! C ABI for the lrsqn optimization library.
//!
//! Matrices travel as opaque handles, every fallible call returns an
//! [`LrsqnStatus`] code, and the objective is supplied through C callbacks.
//! The header `include/lrsqn.h` is generated at build time by cbindgen.
//!
//! Conventions: functions never take ownership of their arguments unless
//! documented; any `*mut LrsqnMatrix` returned through an out-parameter must
//! be released with [`lrsqn_matrix_free`]. A human-readable description of
//! the most recent failure on the current thread is available through
//! [`lrsqn_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::panic::{catch_unwind, AssertUnwindSafe};

use lrsqn::driver::{minimize, AbortReason, Objective, OptimizerConfig, RunStatus};
use lrsqn::lram::EigenLmMatrix;
use lrsqn::reduction::{reduce, Measure, ReduceError};

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: impl Into<String>) {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message.into());
}

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrsqnStatus {
    Ok = 0,
    /// Generic failure; details via lrsqn_last_error_message.
    Failure = 1,
    /// The optimizer stopped at its iteration cap.
    MaxIterations = 2,
    /// The optimal reduction window splits the shift run.
    StructuralSplit = 3,
    InvalidArgument = 4,
    NullPointer = 5,
    /// A Stein measure was applied to a non-positive-definite matrix.
    PositivityViolation = 6,
    /// The objective or gradient callback failed or produced non-finite
    /// values.
    ObjectiveFailure = 7,
    Io = 8,
}

/// Dissimilarity measure selector for reductions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrsqnMeasure {
    L2 = 0,
    Frobenius = 1,
    Stein = 2,
    InverseStein = 3,
    SymmetrizedStein = 4,
}

impl From<LrsqnMeasure> for Measure {
    fn from(m: LrsqnMeasure) -> Measure {
        match m {
            LrsqnMeasure::L2 => Measure::L2,
            LrsqnMeasure::Frobenius => Measure::Frobenius,
            LrsqnMeasure::Stein => Measure::Stein,
            LrsqnMeasure::InverseStein => Measure::InverseStein,
            LrsqnMeasure::SymmetrizedStein => Measure::SymmetrizedStein,
        }
    }
}

/// Opaque shift-plus-low-rank matrix handle.
pub struct LrsqnMatrix {
    inner: EigenLmMatrix,
}

/// Trust-region optimizer configuration (plain data, passed by pointer).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LrsqnConfig {
    /// Number of stored eigenpairs at the start of an iteration.
    pub memory: usize,
    pub measure: LrsqnMeasure,
    pub eta1: f64,
    pub eta2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Relative boundary tolerance of the subproblem solver.
    pub eps: f64,
    /// Update skip threshold on s^T y.
    pub eps_curv: f64,
    /// Pivot drop threshold of the eigendecomposition refresh.
    pub nu: f64,
    pub initial_radius: f64,
    pub max_iter: usize,
    pub grad_tol_abs: f64,
    pub grad_tol_rel_grad: f64,
    pub grad_tol_rel_f: f64,
}

impl From<LrsqnConfig> for OptimizerConfig {
    fn from(c: LrsqnConfig) -> OptimizerConfig {
        OptimizerConfig {
            memory: c.memory,
            measure: c.measure.into(),
            eta1: c.eta1,
            eta2: c.eta2,
            gamma1: c.gamma1,
            gamma2: c.gamma2,
            tr_tol: c.eps,
            curvature_tol: c.eps_curv,
            nu: c.nu,
            initial_radius: c.initial_radius,
            max_iter: c.max_iter,
            grad_tol_abs: c.grad_tol_abs,
            grad_tol_rel_grad: c.grad_tol_rel_grad,
            grad_tol_rel_f: c.grad_tol_rel_f,
        }
    }
}

/// Summary of a finished optimization run.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LrsqnRunStats {
    pub iterations: usize,
    pub f: f64,
    pub gnorm: f64,
}

/// Objective value callback: write f(x) to `out`, return 0 on success.
pub type LrsqnEvalFn =
    unsafe extern "C" fn(x: *const f64, n: usize, out: *mut f64, user: *mut c_void) -> i32;

/// Gradient callback: write the n entries of grad f(x) to `out`, return 0
/// on success.
pub type LrsqnGradFn =
    unsafe extern "C" fn(x: *const f64, n: usize, out: *mut f64, user: *mut c_void) -> i32;

struct CallbackObjective {
    eval: LrsqnEvalFn,
    grad: LrsqnGradFn,
    user: *mut c_void,
    dim: usize,
}

impl Objective for CallbackObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let mut out = f64::NAN;
        let rc = unsafe { (self.eval)(x.as_ptr(), x.len(), &mut out, self.user) };
        if rc != 0 {
            // the driver turns non-finite values into an objective abort
            return f64::NAN;
        }
        out
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![f64::NAN; x.len()];
        let rc = unsafe { (self.grad)(x.as_ptr(), x.len(), out.as_mut_ptr(), self.user) };
        if rc != 0 {
            out.fill(f64::NAN);
        }
        out
    }
}

fn reduce_error_status(err: &ReduceError) -> LrsqnStatus {
    match err {
        ReduceError::StructuralSplit { .. } => LrsqnStatus::StructuralSplit,
        ReduceError::PositivityViolation { .. } | ReduceError::NonPositiveValue { .. } => {
            LrsqnStatus::PositivityViolation
        }
        ReduceError::InfeasibleWindow { .. } => LrsqnStatus::InvalidArgument,
    }
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null (then only the
/// required length is returned).
#[no_mangle]
pub unsafe extern "C" fn lrsqn_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// New rank-zero matrix `alpha * I` of dimension n. Free with
/// [`lrsqn_matrix_free`]. Returns null when n is zero.
#[no_mangle]
pub extern "C" fn lrsqn_matrix_shifted_identity(n: usize, alpha: f64) -> *mut LrsqnMatrix {
    if n == 0 {
        set_error("matrix dimension must be positive");
        return std::ptr::null_mut();
    }
    Box::into_raw(Box::new(LrsqnMatrix { inner: EigenLmMatrix::shifted_identity(n, alpha) }))
}

/// Deep copy. Returns null on null input.
///
/// # Safety
/// `matrix` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn lrsqn_matrix_clone(matrix: *const LrsqnMatrix) -> *mut LrsqnMatrix {
    if matrix.is_null() {
        set_error("null matrix handle");
        return std::ptr::null_mut();
    }
    Box::into_raw(Box::new(LrsqnMatrix { inner: (*matrix).inner.clone() }))
}

/// Release a handle. Null is a no-op.
///
/// # Safety
/// `matrix` must be a handle returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lrsqn_matrix_free(matrix: *mut LrsqnMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// Matrix dimension n, or 0 for a null handle.
///
/// # Safety
/// `matrix` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn lrsqn_matrix_dim(matrix: *const LrsqnMatrix) -> usize {
    if matrix.is_null() {
        return 0;
    }
    (*matrix).inner.dim()
}

/// Number of stored eigenpairs, or 0 for a null handle.
///
/// # Safety
/// `matrix` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn lrsqn_matrix_rank(matrix: *const LrsqnMatrix) -> usize {
    if matrix.is_null() {
        return 0;
    }
    (*matrix).inner.rank()
}

/// The shift eigenvalue alpha (NaN for a null handle).
///
/// # Safety
/// `matrix` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn lrsqn_matrix_shift(matrix: *const LrsqnMatrix) -> f64 {
    if matrix.is_null() {
        return f64::NAN;
    }
    (*matrix).inner.shift()
}

/// y = B x for a vector of length `len` (= matrix dimension).
///
/// # Safety
/// `x` and `y` must point to `len` readable/writable doubles; `matrix` must
/// be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lrsqn_matrix_matvec(
    matrix: *const LrsqnMatrix,
    x: *const f64,
    y: *mut f64,
    len: usize,
) -> LrsqnStatus {
    if matrix.is_null() || x.is_null() || y.is_null() {
        set_error("null pointer argument");
        return LrsqnStatus::NullPointer;
    }
    let xs = std::slice::from_raw_parts(x, len);
    match (*matrix).inner.matvec(xs) {
        Ok(result) => {
            std::ptr::copy_nonoverlapping(result.as_ptr(), y, len);
            LrsqnStatus::Ok
        }
        Err(err) => {
            set_error(err.to_string());
            LrsqnStatus::InvalidArgument
        }
    }
}

/// Parse a matrix from the text eigenpair format.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable. On Ok the
/// caller owns the returned handle.
#[no_mangle]
pub unsafe extern "C" fn lrsqn_matrix_read_text(
    path: *const c_char,
    out: *mut *mut LrsqnMatrix,
) -> LrsqnStatus {
    if path.is_null() || out.is_null() {
        set_error("null pointer argument");
        return LrsqnStatus::NullPointer;
    }
    let Ok(path) = CStr::from_ptr(path).to_str() else {
        set_error("path is not valid UTF-8");
        return LrsqnStatus::InvalidArgument;
    };
    let file = match File::open(path) {
        Ok(file) => file,
        Err(err) => {
            set_error(format!("{path}: {err}"));
            return LrsqnStatus::Io;
        }
    };
    match EigenLmMatrix::read_text(&mut BufReader::new(file)) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(LrsqnMatrix { inner }));
            LrsqnStatus::Ok
        }
        Err(err) => {
            set_error(format!("{path}: {err}"));
            LrsqnStatus::InvalidArgument
        }
    }
}

/// Write a matrix in the text eigenpair format.
///
/// # Safety
/// `matrix` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lrsqn_matrix_write_text(
    matrix: *const LrsqnMatrix,
    path: *const c_char,
) -> LrsqnStatus {
    if matrix.is_null() || path.is_null() {
        set_error("null pointer argument");
        return LrsqnStatus::NullPointer;
    }
    let Ok(path) = CStr::from_ptr(path).to_str() else {
        set_error("path is not valid UTF-8");
        return LrsqnStatus::InvalidArgument;
    };
    let file = match File::create(path) {
        Ok(file) => file,
        Err(err) => {
            set_error(format!("{path}: {err}"));
            return LrsqnStatus::Io;
        }
    };
    let mut writer = BufWriter::new(file);
    match (*matrix).inner.write_text(&mut writer) {
        Ok(()) => LrsqnStatus::Ok,
        Err(err) => {
            set_error(err.to_string());
            LrsqnStatus::Io
        }
    }
}

/// Nearest matrix with at most `target_rank` stored eigenpairs under
/// `measure`. On Ok, `*out` owns the reduced matrix and `*loss` (when
/// non-null) receives the block objective value.
///
/// # Safety
/// `matrix` must be a live handle, `out` writable; `loss` may be null.
#[no_mangle]
pub unsafe extern "C" fn lrsqn_matrix_reduce(
    matrix: *const LrsqnMatrix,
    target_rank: usize,
    measure: LrsqnMeasure,
    out: *mut *mut LrsqnMatrix,
    loss: *mut f64,
) -> LrsqnStatus {
    if matrix.is_null() || out.is_null() {
        set_error("null pointer argument");
        return LrsqnStatus::NullPointer;
    }
    match reduce(&(*matrix).inner, target_rank, measure.into()) {
        Ok(reduction) => {
            if !loss.is_null() {
                *loss = reduction.loss;
            }
            *out = Box::into_raw(Box::new(LrsqnMatrix { inner: reduction.matrix }));
            LrsqnStatus::Ok
        }
        Err(err) => {
            set_error(err.to_string());
            reduce_error_status(&err)
        }
    }
}

/// The library's default optimizer configuration (Frobenius measure,
/// memory 5).
#[no_mangle]
pub extern "C" fn lrsqn_config_default() -> LrsqnConfig {
    let d = OptimizerConfig::default();
    LrsqnConfig {
        memory: d.memory,
        measure: LrsqnMeasure::Frobenius,
        eta1: d.eta1,
        eta2: d.eta2,
        gamma1: d.gamma1,
        gamma2: d.gamma2,
        eps: d.tr_tol,
        eps_curv: d.curvature_tol,
        nu: d.nu,
        initial_radius: d.initial_radius,
        max_iter: d.max_iter,
        grad_tol_abs: d.grad_tol_abs,
        grad_tol_rel_grad: d.grad_tol_rel_grad,
        grad_tol_rel_f: d.grad_tol_rel_f,
    }
}

/// Minimize an objective supplied through callbacks. `x` holds the starting
/// point on entry and the final iterate on exit. `stats`, when non-null,
/// receives the run summary. Returns Ok on convergence, MaxIterations when
/// the cap was reached (x still holds the best iterate), and an error code
/// otherwise.
///
/// # Safety
/// `x` must point to `n` read/writable doubles; `config` must be a valid
/// configuration; the callbacks must be safe to call with any x of length n
/// and must not unwind across the boundary.
#[no_mangle]
pub unsafe extern "C" fn lrsqn_minimize(
    eval: LrsqnEvalFn,
    grad: LrsqnGradFn,
    user: *mut c_void,
    x: *mut f64,
    n: usize,
    config: *const LrsqnConfig,
    stats: *mut LrsqnRunStats,
) -> LrsqnStatus {
    if x.is_null() || config.is_null() {
        set_error("null pointer argument");
        return LrsqnStatus::NullPointer;
    }
    if n == 0 {
        set_error("dimension must be positive");
        return LrsqnStatus::InvalidArgument;
    }
    let objective = CallbackObjective { eval, grad, user, dim: n };
    let x0 = std::slice::from_raw_parts(x, n).to_vec();
    let cfg: OptimizerConfig = (*config).into();
    let outcome = catch_unwind(AssertUnwindSafe(|| minimize(&objective, &x0, cfg)));
    let result = match outcome {
        Ok(Ok(result)) => result,
        Ok(Err(err)) => {
            let status = match &err {
                lrsqn::driver::DriverError::InvalidConfig(_) => LrsqnStatus::InvalidArgument,
                lrsqn::driver::DriverError::ObjectiveFailure => LrsqnStatus::ObjectiveFailure,
                _ => LrsqnStatus::Failure,
            };
            set_error(err.to_string());
            return status;
        }
        Err(_) => {
            set_error("internal panic during minimization");
            return LrsqnStatus::Failure;
        }
    };
    std::ptr::copy_nonoverlapping(result.x.as_ptr(), x, n);
    if !stats.is_null() {
        *stats = LrsqnRunStats {
            iterations: result.iterations,
            f: result.f,
            gnorm: result.gnorm,
        };
    }
    match result.status {
        RunStatus::Converged => LrsqnStatus::Ok,
        RunStatus::MaxIterations => {
            set_error("stopped at the iteration cap");
            LrsqnStatus::MaxIterations
        }
        RunStatus::Aborted(reason) => {
            let status = match &reason {
                AbortReason::ObjectiveFailure => LrsqnStatus::ObjectiveFailure,
                AbortReason::StructuralSplit(_) => LrsqnStatus::StructuralSplit,
                AbortReason::Numerical(_) => LrsqnStatus::Failure,
            };
            set_error(format!("{reason:?}"));
            status
        }
    }
}
