//! Benchmark problem generators and objectives.
//!
//! Covers the desk-scale experiment set: random least-squares problems with
//! log-normal singular values and Haar-distributed singular vectors,
//! logistic regression over LIBSVM-format data, the extended Rosenbrock
//! function, and the curvature aggregation test that measures how faithfully
//! the limited-memory pipeline reproduces full-memory inverse BFGS.

use std::io::BufRead;

use thiserror::Error;

use crate::dense::{axpy, dot, norm2, DenseError, SymMat};
use crate::driver::{DriverError, Objective, Optimizer, OptimizerConfig, RunStatus};
use crate::eigupdate::EigUpdateError;
use crate::lram::EigenLmMatrix;
use crate::qnupdate::{inverse_bfgs_update, CurvaturePair, UpdateError};
use crate::reduction::{reduce, Measure, ReduceError};
use crate::rng::Rng;

// ---------------------------------------------------------------------------
// Random quadratic problems
// ---------------------------------------------------------------------------

/// Least-squares objective `f(x) = ||C x - d||^2` with `d = C 1`, so the
/// optimum is the all-ones vector with value zero.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    n: usize,
    /// Row-major n x n.
    c: Vec<f64>,
    d: Vec<f64>,
}

impl QuadraticProblem {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn optimum(&self) -> Vec<f64> {
        vec![1.0; self.n]
    }

    fn residual(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n).map(|i| dot(&self.c[i * n..(i + 1) * n], x) - self.d[i]).collect()
    }

    /// Dense Hessian `2 C^T C`; test support.
    pub fn hessian(&self) -> SymMat {
        let n = self.n;
        SymMat::from_fn(n, |i, j| {
            2.0 * (0..n).map(|k| self.c[k * n + i] * self.c[k * n + j]).sum::<f64>()
        })
    }

    /// Text form: first line n, then the rows of C. `d` is rebuilt as `C 1`.
    pub fn write_text(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "{}", self.n)?;
        for i in 0..self.n {
            let row: Vec<String> =
                self.c[i * self.n..(i + 1) * self.n].iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text(r: &mut impl BufRead) -> Result<Self, LibsvmError> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let n: usize = header
            .trim()
            .parse()
            .map_err(|_| LibsvmError::Parse { line: 1, message: "expected dimension".into() })?;
        let mut c = Vec::with_capacity(n * n);
        let mut buf = String::new();
        let mut line_no = 1;
        while c.len() < n * n {
            buf.clear();
            line_no += 1;
            if r.read_line(&mut buf)? == 0 {
                return Err(LibsvmError::Parse {
                    line: line_no,
                    message: "unexpected end of matrix data".into(),
                });
            }
            for tok in buf.split_whitespace() {
                c.push(tok.parse().map_err(|e| LibsvmError::Parse {
                    line: line_no,
                    message: format!("bad entry: {e}"),
                })?);
            }
        }
        Ok(Self::from_matrix(n, c))
    }

    pub fn from_matrix(n: usize, c: Vec<f64>) -> Self {
        assert_eq!(c.len(), n * n);
        let d = (0..n).map(|i| c[i * n..(i + 1) * n].iter().sum()).collect();
        QuadraticProblem { n, c, d }
    }
}

impl Objective for QuadraticProblem {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.residual(x).iter().map(|r| r * r).sum()
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let r = self.residual(x);
        // 2 C^T r
        let mut g = vec![0.0; n];
        for i in 0..n {
            axpy(2.0 * r[i], &self.c[i * n..(i + 1) * n], &mut g);
        }
        g
    }
}

/// Haar-distributed orthogonal matrix: QR of a standard Gaussian matrix with
/// the R diagonal signs folded into Q (Mezzadri's construction). Row-major.
fn haar_orthogonal(n: usize, rng: &mut Rng) -> Vec<f64> {
    let mut a: Vec<f64> = (0..n * n).map(|_| rng.normal()).collect();
    // Householder factorization; reflectors stored in the lower part.
    let mut betas = vec![0.0; n];
    let mut r_diag = vec![0.0; n];
    for k in 0..n {
        let mut norm_sq = 0.0;
        for i in k..n {
            norm_sq += a[i * n + k] * a[i * n + k];
        }
        let norm = norm_sq.sqrt();
        if norm == 0.0 {
            betas[k] = 0.0;
            r_diag[k] = 0.0;
            continue;
        }
        let old_head = a[k * n + k];
        let alpha = if old_head >= 0.0 { -norm } else { norm };
        r_diag[k] = alpha;
        let v0 = old_head - alpha;
        a[k * n + k] = v0;
        // v^T v with the head replaced: norm_sq - old_head^2 + v0^2
        let vtv = norm_sq - old_head * old_head + v0 * v0;
        betas[k] = if vtv > 0.0 { 2.0 / vtv } else { 0.0 };
        // apply H_k to the trailing columns
        for j in k + 1..n {
            let mut s = 0.0;
            for i in k..n {
                s += a[i * n + k] * a[i * n + j];
            }
            s *= betas[k];
            for i in k..n {
                a[i * n + j] -= s * a[i * n + k];
            }
        }
    }
    // accumulate Q = H_0 H_1 ... H_{n-1} applied to the identity, backward
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
    }
    for k in (0..n).rev() {
        if betas[k] == 0.0 {
            continue;
        }
        for j in 0..n {
            let mut s = 0.0;
            for i in k..n {
                s += a[i * n + k] * q[i * n + j];
            }
            s *= betas[k];
            for i in k..n {
                q[i * n + j] -= s * a[i * n + k];
            }
        }
    }
    // fold the R diagonal signs into the columns of Q
    for k in 0..n {
        if r_diag[k] < 0.0 {
            for i in 0..n {
                q[i * n + k] = -q[i * n + k];
            }
        }
    }
    q
}

/// Random least-squares problem: `C = U diag(exp(z)) V^T` with i.i.d.
/// standard normal `z` and independent Haar orthogonal `U`, `V`;
/// `d = C 1`. Deterministic per seed.
pub fn gen_random_qp(n: usize, seed: u64) -> QuadraticProblem {
    assert!(n >= 2);
    let mut rng = Rng::new(seed);
    let u = haar_orthogonal(n, &mut rng);
    let v = haar_orthogonal(n, &mut rng);
    let sv: Vec<f64> = (0..n).map(|_| rng.normal().exp()).collect();
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += u[i * n + k] * sv[k] * v[j * n + k];
            }
            c[i * n + j] = s;
        }
    }
    QuadraticProblem::from_matrix(n, c)
}

// ---------------------------------------------------------------------------
// Extended Rosenbrock
// ---------------------------------------------------------------------------

/// Chained Rosenbrock function, minimum at the all-ones vector.
#[derive(Debug, Clone)]
pub struct Rosenbrock {
    n: usize,
}

impl Rosenbrock {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2);
        Rosenbrock { n }
    }
}

impl Objective for Rosenbrock {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (0..self.n - 1)
            .map(|i| {
                let t = x[i + 1] - x[i] * x[i];
                100.0 * t * t + (1.0 - x[i]) * (1.0 - x[i])
            })
            .sum()
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n];
        for i in 0..self.n - 1 {
            let t = x[i + 1] - x[i] * x[i];
            g[i] += -400.0 * t * x[i] - 2.0 * (1.0 - x[i]);
            g[i + 1] += 200.0 * t;
        }
        g
    }
}

// ---------------------------------------------------------------------------
// LIBSVM data and logistic regression
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum LibsvmError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("non-ascending feature index at line {line}")]
    NonAscendingIndex { line: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One sample: label in {-1, +1} and ascending (1-based index, value) pairs.
#[derive(Debug, Clone)]
pub struct SparseRow {
    pub label: f64,
    pub features: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct SparseDataset {
    rows: Vec<SparseRow>,
    feature_count: usize,
}

impl SparseDataset {
    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn from_rows(rows: Vec<SparseRow>) -> Self {
        let feature_count = rows
            .iter()
            .flat_map(|r| r.features.iter().map(|f| f.0))
            .max()
            .unwrap_or(0);
        SparseDataset { rows, feature_count }
    }
}

/// Parse the `label idx:val idx:val ...` text format. Labels may be -1, 0,
/// or 1; zero maps to -1. Indices are 1-based and must ascend within a row.
pub fn parse_libsvm(reader: &mut impl BufRead) -> Result<SparseDataset, LibsvmError> {
    let mut rows = Vec::new();
    let mut buf = String::new();
    let mut line_no = 0usize;
    loop {
        buf.clear();
        line_no += 1;
        if reader.read_line(&mut buf)? == 0 {
            break;
        }
        let mut tokens = buf.split_whitespace();
        let Some(label_tok) = tokens.next() else { continue };
        let raw: f64 = label_tok.parse().map_err(|_| LibsvmError::Parse {
            line: line_no,
            message: format!("bad label `{label_tok}`"),
        })?;
        let label = if raw == 0.0 || raw == -1.0 {
            -1.0
        } else if raw == 1.0 {
            1.0
        } else {
            return Err(LibsvmError::Parse {
                line: line_no,
                message: format!("unsupported label {raw}; expected -1, 0, or 1"),
            });
        };
        let mut features = Vec::new();
        let mut last_idx = 0usize;
        for tok in tokens {
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| LibsvmError::Parse {
                line: line_no,
                message: format!("expected idx:val, got `{tok}`"),
            })?;
            let idx: usize = idx_s.parse().map_err(|_| LibsvmError::Parse {
                line: line_no,
                message: format!("bad feature index `{idx_s}`"),
            })?;
            let val: f64 = val_s.parse().map_err(|_| LibsvmError::Parse {
                line: line_no,
                message: format!("bad feature value `{val_s}`"),
            })?;
            if idx == 0 {
                return Err(LibsvmError::Parse {
                    line: line_no,
                    message: "feature indices are 1-based".into(),
                });
            }
            if idx <= last_idx {
                return Err(LibsvmError::NonAscendingIndex { line: line_no });
            }
            last_idx = idx;
            features.push((idx, val));
        }
        rows.push(SparseRow { label, features });
    }
    Ok(SparseDataset::from_rows(rows))
}

/// Ridge-regularized logistic loss over a sparse dataset:
/// `sum_i log(1 + exp(-y_i a_i^T x)) + ridge/2 ||x||^2`.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    data: SparseDataset,
    ridge: f64,
}

pub fn logistic_objective(data: SparseDataset, ridge: f64) -> LogisticObjective {
    assert!(ridge >= 0.0);
    LogisticObjective { data, ridge }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogisticObjective {
    pub fn data(&self) -> &SparseDataset {
        &self.data
    }

    fn margin(&self, row: &SparseRow, x: &[f64]) -> f64 {
        row.features.iter().map(|&(idx, v)| v * x[idx - 1]).sum()
    }
}

impl Objective for LogisticObjective {
    fn dim(&self) -> usize {
        self.data.feature_count()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let mut f = 0.0;
        for row in &self.data.rows {
            f += softplus(-row.label * self.margin(row, x));
        }
        f + 0.5 * self.ridge * dot(x, x)
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = x.iter().map(|v| self.ridge * v).collect();
        for row in &self.data.rows {
            let t = -row.label * self.margin(row, x);
            let coeff = -row.label * sigmoid(t);
            for &(idx, v) in &row.features {
                g[idx - 1] += coeff * v;
            }
        }
        g
    }
}

/// Synthetic linearly separable classification data for the logistic
/// regression sanity runs.
///
/// Rows are unit-norm with a controlled signed margin along a hidden ground
/// truth direction (between 0.08 and 0.4), so the data is strictly separable
/// but the logistic losses stay active near the ridge optimum and the
/// problem is well-conditioned for quasi-Newton runs.
pub fn synthetic_logistic_dataset(
    samples: usize,
    features: usize,
    seed: u64,
) -> SparseDataset {
    let mut rng = Rng::new(seed);
    let mut truth = rng.normal_vec(features);
    let truth_norm = norm2(&truth);
    for v in truth.iter_mut() {
        *v /= truth_norm;
    }
    let mut rows = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut row = rng.normal_vec(features);
        // strip the truth component, then install the margin explicitly
        let c = dot(&row, &truth);
        axpy(-c, &truth, &mut row);
        let row_norm = norm2(&row).max(1e-12);
        for v in row.iter_mut() {
            *v /= row_norm;
        }
        let sign = if rng.uniform() < 0.5 { 1.0 } else { -1.0 };
        let margin = sign * 0.4 * rng.range(0.2, 1.0);
        axpy(margin, &truth, &mut row);
        let features_row: Vec<(usize, f64)> =
            row.iter().enumerate().map(|(i, &v)| (i + 1, v)).collect();
        rows.push(SparseRow { label: sign, features: features_row });
    }
    SparseDataset::from_rows(rows)
}

// ---------------------------------------------------------------------------
// Curvature aggregation test
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum AggregationError {
    #[error("could not draw a positive-curvature pair after {0} retries")]
    CurvatureRetriesExhausted(usize),
    #[error(transparent)]
    Update(#[from] UpdateError),
    #[error(transparent)]
    EigUpdate(#[from] EigUpdateError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error(transparent)]
    Dense(#[from] DenseError),
}

/// Knobs of the aggregation protocol that the underlying experiment leaves
/// open; the defaults are recorded here so runs are reproducible.
#[derive(Debug, Clone)]
pub struct AggregationConfig {
    pub measure: Measure,
    /// Pivot drop threshold for the eigendecomposition refresh.
    pub nu: f64,
    /// Gradient noise standard deviation as a fraction of the gradient norm.
    pub noise_scale: f64,
    /// Gradient descent step as a fraction of 1/L.
    pub step_scale: f64,
    pub curvature_retries: usize,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig {
            measure: Measure::Frobenius,
            nu: 0.0,
            noise_scale: 0.01,
            step_scale: 0.1,
            curvature_retries: 10,
        }
    }
}

/// The pair sequence of one aggregation trial: `m` pairs from noisy gradient
/// descent on a seeded random quadratic, followed by one pair whose `s` is a
/// normal-weighted sum of the previous steps with exact `y = H s`.
pub fn aggregation_pairs(
    n: usize,
    m: usize,
    seed: u64,
    cfg: &AggregationConfig,
) -> Result<Vec<CurvaturePair>, AggregationError> {
    assert!(m >= 1 && m <= n, "need 1 <= m <= n");
    let mut rng = Rng::new(seed.wrapping_mul(0x9E37).wrapping_add(17));
    let qp = if n == 1 {
        // the scalar case falls outside the Haar generator
        QuadraticProblem::from_matrix(1, vec![rng.normal().exp()])
    } else {
        gen_random_qp(n, seed)
    };
    let hessian = qp.hessian();
    let lipschitz = *hessian.eigen(100)?.values.last().expect("nonempty spectrum");
    let step = cfg.step_scale / lipschitz;
    let noisy_grad = |x: &[f64], rng: &mut Rng| -> Vec<f64> {
        let mut g = qp.grad(x);
        let sd = cfg.noise_scale * norm2(&g);
        for v in g.iter_mut() {
            *v += sd * rng.normal();
        }
        g
    };

    let mut x: Vec<f64> = rng.normal_vec(n);
    let mut g_cur = noisy_grad(&x, &mut rng);
    let mut pairs: Vec<CurvaturePair> = Vec::with_capacity(m + 1);
    for _ in 0..m {
        // a rejected pair is regenerated whole: fresh noise for both
        // endpoints, hence a fresh step as well
        let mut accepted = None;
        for attempt in 0..=cfg.curvature_retries {
            let g_used =
                if attempt == 0 { g_cur.clone() } else { noisy_grad(&x, &mut rng) };
            let s: Vec<f64> = g_used.iter().map(|v| -step * v).collect();
            let x_next: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a + b).collect();
            let g_next = noisy_grad(&x_next, &mut rng);
            let y: Vec<f64> = g_next.iter().zip(&g_used).map(|(a, b)| a - b).collect();
            let pair = CurvaturePair::new(s, y);
            if pair.curvature() > 0.0 {
                accepted = Some((pair, x_next, g_next));
                break;
            }
        }
        let (pair, x_next, g_next) = accepted
            .ok_or(AggregationError::CurvatureRetriesExhausted(cfg.curvature_retries))?;
        pairs.push(pair);
        x = x_next;
        g_cur = g_next;
    }
    // the aggregated pair: s0 in the span of s_1..s_m, exact curvature
    let weights: Vec<f64> = rng.normal_vec(m);
    let mut s0 = vec![0.0; n];
    for (w, pair) in weights.iter().zip(&pairs) {
        axpy(*w, &pair.s, &mut s0);
    }
    let y0 = hessian.matvec(&s0);
    pairs.push(CurvaturePair::new(s0, y0));
    Ok(pairs)
}

/// Push a pair sequence through the limited-memory inverse-BFGS pipeline
/// with budget `m` and compare against dense full-memory inverse BFGS.
/// Returns the elementwise relative error: max absolute difference over the
/// max absolute entry of the dense result.
pub fn aggregation_error(
    pairs: &[CurvaturePair],
    n: usize,
    m: usize,
    cfg: &AggregationConfig,
) -> Result<f64, AggregationError> {
    let mut limited = EigenLmMatrix::shifted_identity(n, 1.0);
    let mut full = SymMat::identity(n);
    for pair in pairs {
        let compact = inverse_bfgs_update(&limited, pair)?;
        limited = compact.recompose(cfg.nu)?;
        if limited.rank() > m {
            limited = reduce(&limited, m, cfg.measure)?.matrix;
        }
        full = crate::oracle::dense_inverse_bfgs(&full, &pair.s, &pair.y)?;
    }
    let limited_dense = limited.to_dense().expect("aggregation sizes are small");
    let denom = full.max_abs().max(f64::MIN_POSITIVE);
    Ok(limited_dense.sub(&full).max_abs() / denom)
}

/// One full aggregation trial; see [`aggregation_pairs`] and
/// [`aggregation_error`].
pub fn aggregation_test(
    n: usize,
    m: usize,
    seed: u64,
    cfg: &AggregationConfig,
) -> Result<f64, AggregationError> {
    let pairs = aggregation_pairs(n, m, seed, cfg)?;
    aggregation_error(&pairs, n, m, cfg)
}

// ---------------------------------------------------------------------------
// Distance-per-iteration runs for the QP benchmark
// ---------------------------------------------------------------------------

/// Minimize a seeded random QP from the origin and report
/// `log10(||x_k - 1|| / ||x_0 - 1||)` after each of `iters` iterations
/// (replicating the final value if the run stops early).
pub fn qp_distance_run(
    n: usize,
    m: usize,
    measure: Measure,
    seed: u64,
    iters: usize,
) -> Result<Vec<f64>, DriverError> {
    let qp = gen_random_qp(n, seed);
    let x_star = qp.optimum();
    let x0 = vec![0.0; n];
    let denom = norm2(&x_star); // ||x0 - x*|| = sqrt(n)
    let cfg = OptimizerConfig {
        memory: m,
        measure,
        max_iter: iters,
        grad_tol_abs: 0.0,
        grad_tol_rel_grad: 0.0,
        grad_tol_rel_f: 0.0,
        ..OptimizerConfig::default()
    };
    let f0 = qp.eval(&x0);
    let g0 = qp.grad(&x0);
    let mut opt = Optimizer::new(cfg, x0, f0, g0)?;
    let mut log_dists = Vec::with_capacity(iters);
    while opt.finished().is_none() {
        let proposal = opt.propose()?;
        let f_trial = qp.eval(&proposal.x_trial);
        let outcome = opt.commit(f_trial)?;
        if outcome.needs_gradient {
            let g = qp.grad(opt.x());
            opt.set_gradient(g)?;
        }
        let dist: f64 = opt
            .x()
            .iter()
            .zip(&x_star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        log_dists.push((dist / denom).max(1e-16).log10());
    }
    if let Some(RunStatus::Aborted(reason)) = opt.finished() {
        return Err(DriverError::InvalidConfig(format!("benchmark run aborted: {reason:?}")));
    }
    let last = log_dists.last().copied().unwrap_or(0.0);
    log_dists.resize(iters, last);
    Ok(log_dists)
}
