//! Command-line frontend: batch minimization runs, Monte-Carlo benchmarks,
//! and file-based matrix reduction.
//!
//! Exit codes: 0 success/convergence, 1 invalid input or failure, 2 stopped
//! at the iteration cap, 3 structural split during reduction.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use lrsqn::driver::{
    minimize, write_trace_csv, AbortReason, MinimizeResult, Objective, OptimizerConfig,
    RunStatus,
};
use lrsqn::lram::EigenLmMatrix;
use lrsqn::problems::{
    aggregation_test, gen_random_qp, logistic_objective, parse_libsvm, qp_distance_run,
    synthetic_logistic_dataset, AggregationConfig, Rosenbrock,
};
use lrsqn::reduction::{reduce, Measure, ReduceError};

const EXIT_OK: u8 = 0;
const EXIT_FAILURE: u8 = 1;
const EXIT_MAX_ITERATIONS: u8 = 2;
const EXIT_STRUCTURAL_SPLIT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "lrsqn",
    about = "Limited-memory quasi-Newton optimization with eigenpair Hessian storage",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Minimize a benchmark problem and write the iteration trace as CSV.
    Minimize(MinimizeArgs),
    /// Monte-Carlo comparison of the l2 and Frobenius reductions on random
    /// least-squares problems.
    BenchQp(BenchQpArgs),
    /// Aggregation-error quartiles over a grid of (n, m) cells.
    BenchAgg(BenchAggArgs),
    /// Reduce a matrix in the text eigenpair format to a target rank.
    Reduce(ReduceArgs),
}

#[derive(Args)]
struct ConfigFlags {
    /// Flat key=value file overriding the built-in defaults; explicit flags
    /// override the file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reject threshold for ared/pred.
    #[arg(long)]
    eta1: Option<f64>,
    /// Expand threshold for ared/pred.
    #[arg(long)]
    eta2: Option<f64>,
    /// Radius shrink factor.
    #[arg(long)]
    gamma1: Option<f64>,
    /// Radius growth factor.
    #[arg(long)]
    gamma2: Option<f64>,
    /// Relative boundary tolerance of the subproblem solver.
    #[arg(long)]
    eps: Option<f64>,
    /// Update skip threshold on s^T y.
    #[arg(long = "eps-curv")]
    eps_curv: Option<f64>,
    /// Pivot drop threshold of the eigendecomposition refresh.
    #[arg(long)]
    nu: Option<f64>,
    /// Initial trust-region radius.
    #[arg(long)]
    d0: Option<f64>,
    #[arg(long = "grad-tol-abs")]
    grad_tol_abs: Option<f64>,
    #[arg(long = "grad-tol-rel-grad")]
    grad_tol_rel_grad: Option<f64>,
    #[arg(long = "grad-tol-rel-f")]
    grad_tol_rel_f: Option<f64>,
}

#[derive(Args)]
struct MinimizeArgs {
    /// Problem family: qp, logreg, or rosenbrock.
    #[arg(long)]
    problem: String,
    /// Problem dimension (feature count for logreg).
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Eigenpair memory budget.
    #[arg(long)]
    m: usize,
    /// Reduction measure: l2, fro, stein, istein, or sstein.
    #[arg(long, default_value = "fro")]
    measure: String,
    #[arg(long = "max-iter", default_value_t = 500)]
    max_iter: usize,
    /// Trace CSV destination (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// LIBSVM data file for logreg (synthetic data when omitted).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Ridge coefficient for logreg.
    #[arg(long, default_value_t = 1e-4)]
    ridge: f64,
    #[command(flatten)]
    config: ConfigFlags,
}

#[derive(Args)]
struct BenchQpArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 5)]
    m: usize,
    #[arg(long, default_value_t = 150)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchAggArgs {
    /// Comma-separated list of dimensions.
    #[arg(long = "n-list", default_value = "4,16,64")]
    n_list: String,
    /// Comma-separated list of memory budgets.
    #[arg(long = "m-list", default_value = "4,16,64")]
    m_list: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value = "fro")]
    measure: String,
    #[arg(long, default_value_t = 0.0)]
    nu: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReduceArgs {
    #[arg(long)]
    measure: String,
    #[arg(long = "target-rank")]
    target_rank: usize,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
    /// Cross-check the result against the dense exhaustive-window oracle
    /// (dimension-capped).
    #[arg(long, default_value_t = false)]
    verify: bool,
}

fn main() -> ExitCode {
    // usage errors exit 1; code 2 stays reserved for the iteration cap
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            let code = if err.use_stderr() { EXIT_FAILURE } else { EXIT_OK };
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Minimize(args) => cmd_minimize(args),
        Command::BenchQp(args) => cmd_bench_qp(args),
        Command::BenchAgg(args) => cmd_bench_agg(args),
        Command::Reduce(args) => cmd_reduce(args),
    };
    match code {
        Ok(code) => ExitCode::from(code),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn parse_measure(s: &str) -> Result<Measure, String> {
    Measure::parse(s).ok_or_else(|| {
        format!("unknown measure `{s}`; expected one of l2, fro, stein, istein, sstein")
    })
}

fn apply_config_file(cfg: &mut OptimizerConfig, path: &Path) -> Result<(), String> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{}:{}: expected key=value", path.display(), line_no + 1))?;
        let key = key.trim();
        let value = value.trim();
        let bad = |e: &dyn std::fmt::Display| {
            format!("{}:{}: bad value for {key}: {e}", path.display(), line_no + 1)
        };
        match key {
            "m" | "memory" => cfg.memory = value.parse().map_err(|e| bad(&e))?,
            "measure" => cfg.measure = parse_measure(value)?,
            "eta1" => cfg.eta1 = value.parse().map_err(|e| bad(&e))?,
            "eta2" => cfg.eta2 = value.parse().map_err(|e| bad(&e))?,
            "gamma1" => cfg.gamma1 = value.parse().map_err(|e| bad(&e))?,
            "gamma2" => cfg.gamma2 = value.parse().map_err(|e| bad(&e))?,
            "eps" => cfg.tr_tol = value.parse().map_err(|e| bad(&e))?,
            "eps_curv" => cfg.curvature_tol = value.parse().map_err(|e| bad(&e))?,
            "nu" => cfg.nu = value.parse().map_err(|e| bad(&e))?,
            "d0" => cfg.initial_radius = value.parse().map_err(|e| bad(&e))?,
            "max_iter" => cfg.max_iter = value.parse().map_err(|e| bad(&e))?,
            "grad_tol_abs" => cfg.grad_tol_abs = value.parse().map_err(|e| bad(&e))?,
            "grad_tol_rel_grad" => {
                cfg.grad_tol_rel_grad = value.parse().map_err(|e| bad(&e))?
            }
            "grad_tol_rel_f" => cfg.grad_tol_rel_f = value.parse().map_err(|e| bad(&e))?,
            // reserved for reducing with a period other than every iteration
            "reduce_every" => {
                if value != "1" {
                    return Err(format!(
                        "{}:{}: reduce_every is reserved and must be 1",
                        path.display(),
                        line_no + 1
                    ));
                }
            }
            other => {
                return Err(format!(
                    "{}:{}: unknown configuration key `{other}`",
                    path.display(),
                    line_no + 1
                ));
            }
        }
    }
    Ok(())
}

fn build_config(args: &MinimizeArgs, measure: Measure) -> Result<OptimizerConfig, String> {
    let mut cfg = OptimizerConfig {
        memory: args.m,
        measure,
        max_iter: args.max_iter,
        ..OptimizerConfig::default()
    };
    if let Some(path) = &args.config.config {
        apply_config_file(&mut cfg, path)?;
        // the direct flags take precedence over the file
        cfg.memory = args.m;
        cfg.measure = measure;
        cfg.max_iter = args.max_iter;
    }
    let f = &args.config;
    if let Some(v) = f.eta1 {
        cfg.eta1 = v;
    }
    if let Some(v) = f.eta2 {
        cfg.eta2 = v;
    }
    if let Some(v) = f.gamma1 {
        cfg.gamma1 = v;
    }
    if let Some(v) = f.gamma2 {
        cfg.gamma2 = v;
    }
    if let Some(v) = f.eps {
        cfg.tr_tol = v;
    }
    if let Some(v) = f.eps_curv {
        cfg.curvature_tol = v;
    }
    if let Some(v) = f.nu {
        cfg.nu = v;
    }
    if let Some(v) = f.d0 {
        cfg.initial_radius = v;
    }
    if let Some(v) = f.grad_tol_abs {
        cfg.grad_tol_abs = v;
    }
    if let Some(v) = f.grad_tol_rel_grad {
        cfg.grad_tol_rel_grad = v;
    }
    if let Some(v) = f.grad_tol_rel_f {
        cfg.grad_tol_rel_f = v;
    }
    Ok(cfg)
}

fn write_out(
    path: Option<&Path>,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), String> {
    match path {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| format!("cannot create {}: {e}", path.display()))?;
            let mut w = BufWriter::new(file);
            body(&mut w).and_then(|()| w.flush()).map_err(|e| format!("write failed: {e}"))
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            body(&mut w).map_err(|e| format!("write failed: {e}"))
        }
    }
}

fn run_and_report(
    obj: &dyn Objective,
    x0: &[f64],
    cfg: OptimizerConfig,
    out: Option<&Path>,
) -> Result<u8, String> {
    let result: MinimizeResult = minimize(obj, x0, cfg).map_err(|e| e.to_string())?;
    write_out(out, |w| write_trace_csv(&result.trace, w))?;
    eprintln!(
        "status: {:?}  iterations: {}  f: {:e}  gnorm: {:e}",
        result.status, result.iterations, result.f, result.gnorm
    );
    Ok(match result.status {
        RunStatus::Converged => EXIT_OK,
        RunStatus::MaxIterations => EXIT_MAX_ITERATIONS,
        RunStatus::Aborted(AbortReason::StructuralSplit(_)) => EXIT_STRUCTURAL_SPLIT,
        RunStatus::Aborted(_) => EXIT_FAILURE,
    })
}

fn cmd_minimize(args: MinimizeArgs) -> Result<u8, String> {
    let measure = parse_measure(&args.measure)?;
    let cfg = build_config(&args, measure)?;
    let out = args.out.as_deref();
    match args.problem.as_str() {
        "qp" => {
            let qp = gen_random_qp(args.n, args.seed);
            let x0 = vec![0.0; args.n];
            run_and_report(&qp, &x0, cfg, out)
        }
        "rosenbrock" => {
            let obj = Rosenbrock::new(args.n);
            let x0: Vec<f64> =
                (0..args.n).map(|i| if i % 2 == 0 { -1.2 } else { 1.0 }).collect();
            run_and_report(&obj, &x0, cfg, out)
        }
        "logreg" => {
            let data = match &args.data {
                Some(path) => {
                    let file = File::open(path)
                        .map_err(|e| format!("cannot open {}: {e}", path.display()))?;
                    parse_libsvm(&mut BufReader::new(file)).map_err(|e| e.to_string())?
                }
                None => synthetic_logistic_dataset(args.n * 5 / 2, args.n, args.seed),
            };
            let obj = logistic_objective(data, args.ridge);
            let x0 = vec![0.0; obj.dim()];
            run_and_report(&obj, &x0, cfg, out)
        }
        other => Err(format!("unknown problem `{other}`; expected qp, logreg, or rosenbrock")),
    }
}

/// Worker-pool map over trial indices; deterministic because every trial is
/// seeded independently of the schedule. LRSQN_THREADS caps the pool.
fn run_trials<T: Send>(trials: usize, job: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let threads = std::env::var("LRSQN_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1))
        .min(trials.max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<T>>> = Mutex::new((0..trials).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= trials {
                    break;
                }
                let value = job(i);
                results.lock().expect("collector poisoned")[i] = Some(value);
            });
        }
    });
    results
        .into_inner()
        .expect("collector poisoned")
        .into_iter()
        .map(|v| v.expect("every trial filled"))
        .collect()
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn cmd_bench_qp(args: BenchQpArgs) -> Result<u8, String> {
    if args.trials == 0 || args.iters == 0 {
        return Err("trials and iters must be positive".into());
    }
    let runs = run_trials(args.trials, |t| {
        let seed = args.seed + t as u64;
        let l2 = qp_distance_run(args.n, args.m, Measure::L2, seed, args.iters);
        let fro = qp_distance_run(args.n, args.m, Measure::Frobenius, seed, args.iters);
        (l2, fro)
    });
    let mut l2_runs = Vec::with_capacity(args.trials);
    let mut fro_runs = Vec::with_capacity(args.trials);
    for (l2, fro) in runs {
        l2_runs.push(l2.map_err(|e| e.to_string())?);
        fro_runs.push(fro.map_err(|e| e.to_string())?);
    }
    write_out(args.out.as_deref(), |w| {
        writeln!(w, "iter,mean_l2,sd_l2,mean_fro,sd_fro")?;
        for k in 0..args.iters {
            let l2: Vec<f64> = l2_runs.iter().map(|r| r[k]).collect();
            let fro: Vec<f64> = fro_runs.iter().map(|r| r[k]).collect();
            let (ml, sl) = mean_sd(&l2);
            let (mf, sf) = mean_sd(&fro);
            writeln!(w, "{},{},{},{},{}", k + 1, ml, sl, mf, sf)?;
        }
        Ok(())
    })?;
    Ok(EXIT_OK)
}

fn quartiles(sorted: &[f64]) -> (f64, f64, f64, f64, f64) {
    let q = |p: f64| -> f64 {
        let idx = p * (sorted.len() - 1) as f64;
        let lo = idx.floor() as usize;
        let hi = idx.ceil() as usize;
        let w = idx - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    };
    (sorted[0], q(0.25), q(0.5), q(0.75), sorted[sorted.len() - 1])
}

fn parse_list(s: &str, what: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("bad {what} `{t}`: {e}")))
        .collect()
}

fn cmd_bench_agg(args: BenchAggArgs) -> Result<u8, String> {
    let measure = parse_measure(&args.measure)?;
    let ns = parse_list(&args.n_list, "dimension")?;
    let ms = parse_list(&args.m_list, "memory budget")?;
    if args.trials == 0 {
        return Err("trials must be positive".into());
    }
    if ms.contains(&0) {
        return Err("memory budgets must be at least 1".into());
    }
    let cfg = AggregationConfig { measure, nu: args.nu, ..AggregationConfig::default() };
    let mut rows = Vec::new();
    for &n in &ns {
        for &m in &ms {
            if m > n {
                return Err(format!("cell (n={n}, m={m}) is invalid: m must not exceed n"));
            }
            let errors = run_trials(args.trials, |t| {
                aggregation_test(n, m, args.seed + t as u64, &cfg).map_err(|e| e.to_string())
            });
            let mut values = Vec::with_capacity(args.trials);
            for e in errors {
                values.push(e?);
            }
            values.sort_by(|a, b| a.partial_cmp(b).expect("errors are finite"));
            rows.push((n, m, quartiles(&values)));
        }
    }
    write_out(args.out.as_deref(), |w| {
        writeln!(w, "n,m,trials,min,q1,median,q3,max")?;
        for (n, m, (min, q1, med, q3, max)) in rows {
            writeln!(w, "{n},{m},{},{min},{q1},{med},{q3},{max}", args.trials)?;
        }
        Ok(())
    })?;
    Ok(EXIT_OK)
}

fn cmd_reduce(args: ReduceArgs) -> Result<u8, String> {
    let measure = parse_measure(&args.measure)?;
    let file = File::open(&args.input)
        .map_err(|e| format!("cannot open {}: {e}", args.input.display()))?;
    let matrix = EigenLmMatrix::read_text(&mut BufReader::new(file))
        .map_err(|e| format!("{}: {e}", args.input.display()))?;
    match reduce(&matrix, args.target_rank, measure) {
        Ok(red) => {
            let file = File::create(&args.output)
                .map_err(|e| format!("cannot create {}: {e}", args.output.display()))?;
            let mut w = BufWriter::new(file);
            red.matrix.write_text(&mut w).map_err(|e| format!("write failed: {e}"))?;
            w.flush().map_err(|e| format!("write failed: {e}"))?;
            eprintln!(
                "reduced rank {} -> {} under {measure}, loss {:e}",
                matrix.rank(),
                red.matrix.rank(),
                red.loss
            );
            if args.verify {
                let dense = matrix
                    .to_dense()
                    .map_err(|e| format!("--verify needs a materializable matrix: {e}"))?;
                let (_, oracle_loss) =
                    lrsqn::oracle::dense_nearest(&dense, args.target_rank, measure)
                        .map_err(|e| format!("oracle: {e}"))?;
                let gap = (red.loss - oracle_loss).abs();
                if gap > 1e-10 * oracle_loss.max(1.0) {
                    return Err(format!(
                        "verification failed: loss {:e} vs oracle {:e}",
                        red.loss, oracle_loss
                    ));
                }
                eprintln!("verified against the dense oracle (loss gap {gap:e})");
            }
            Ok(EXIT_OK)
        }
        Err(err @ ReduceError::StructuralSplit { .. }) => {
            eprintln!("error: {err}");
            Ok(EXIT_STRUCTURAL_SPLIT)
        }
        Err(err) => Err(err.to_string()),
    }
}
