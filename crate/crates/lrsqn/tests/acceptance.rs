//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `--nocapture`). The tests share a lock so
//! the timing-sensitive scaling criterion is never measured while other
//! criteria compute in sibling threads.

use std::sync::Mutex;
use std::time::Instant;

use lrsqn::dense::{axpy, dot, norm2, SymMat};
use lrsqn::driver::{
    full_memory_equivalence_mode, minimize, Objective, Optimizer, OptimizerConfig,
};
use lrsqn::lram::EigenLmMatrix;
use lrsqn::oracle::{aligned_matrix, dense_nearest, dense_distance, dense_tr_solve};
use lrsqn::problems::{
    aggregation_test, gen_random_qp, logistic_objective, parse_libsvm, qp_distance_run,
    synthetic_logistic_dataset, AggregationConfig, Rosenbrock,
};
use lrsqn::reduction::{block_loss, block_mean, reduce, Measure, ReduceError};
use lrsqn::rng::Rng;
use lrsqn::trsolve::{solve_subproblem, CaseTag};

static GATE: Mutex<()> = Mutex::new(());

fn criterion(name: &str, body: impl FnOnce() + std::panic::UnwindSafe) {
    let guard = GATE.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
    let started = Instant::now();
    let outcome = std::panic::catch_unwind(body);
    let secs = started.elapsed().as_secs_f64();
    match &outcome {
        Ok(()) => println!("PASS {name} ({secs:.1}s)"),
        Err(_) => println!("FAIL {name} ({secs:.1}s)"),
    }
    drop(guard);
    if let Err(payload) = outcome {
        std::panic::resume_unwind(payload);
    }
}

fn orthonormal_cols(n: usize, r: usize, rng: &mut Rng) -> Vec<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(r);
    while cols.len() < r {
        let mut v = rng.normal_vec(n);
        for u in &cols {
            let c = dot(&v, u);
            axpy(-c, u, &mut v);
        }
        let nv = norm2(&v);
        if nv > 1e-8 {
            for x in v.iter_mut() {
                *x /= nv;
            }
            cols.push(v);
        }
    }
    cols.concat()
}

/// Positive, pairwise-gapped eigenvalues so oracle comparisons are not
/// dominated by eigenvector degeneracy.
fn gapped_positive_values(count: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let mut vals: Vec<f64> = (0..count).map(|_| rng.range(0.1, 5.0)).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if vals.windows(2).all(|w| w[1] - w[0] >= 1e-3) {
            return vals;
        }
    }
}

// -------------------------------------------------------------------------
// 1. Reduction matches the dense exhaustive-window oracle on random
//    instances for all five measures.
// -------------------------------------------------------------------------
#[test]
fn criterion_1_reduction_oracle_equivalence() {
    criterion("criterion 1: reduction oracle equivalence (1000 instances, 5 measures)", || {
        let started = Instant::now();
        let mut rng = Rng::new(0xC1);
        let mut split_count = 0usize;
        for trial in 0..1000 {
            let n = 5 + rng.below(26);
            let r = (1 + rng.below(6)).min(n - 1);
            let m = rng.below(r);
            let mut values = gapped_positive_values(r + 1, &mut rng);
            let alpha_pos = rng.below(r + 1);
            let alpha = values.remove(alpha_pos);
            let offsets: Vec<f64> = values.iter().map(|v| v - alpha).collect();
            let cols = orthonormal_cols(n, r, &mut rng);
            let mat = EigenLmMatrix::from_parts(n, alpha, offsets, cols).unwrap();
            let dense = mat.to_dense().unwrap();
            let scale = dense.frob_norm().max(1.0);

            for measure in Measure::ALL {
                let oracle = dense_nearest(&dense, m, measure).expect("PD instance");
                match reduce(&mat, m, measure) {
                    Ok(red) => {
                        let (oracle_mat, oracle_loss) = oracle;
                        assert!(
                            (red.loss - oracle_loss).abs() <= 1e-10 * oracle_loss.max(1e-30),
                            "trial {trial} {measure}: loss {} vs oracle {oracle_loss}",
                            red.loss
                        );
                        // eigenvector preservation: every surviving column is
                        // one of the input columns, bitwise
                        for i in 0..red.matrix.rank() {
                            let col = red.matrix.col(i);
                            assert!(
                                (0..mat.rank()).any(|j| mat.col(j) == col),
                                "trial {trial} {measure}: column {i} not preserved"
                            );
                        }
                        let back = red.matrix.to_dense().unwrap();
                        let diff = back.sub(&oracle_mat).frob_norm();
                        assert!(
                            diff <= 1e-8 * scale,
                            "trial {trial} {measure}: dense mismatch {diff}"
                        );
                    }
                    Err(ReduceError::StructuralSplit { .. }) => {
                        // legitimate on tiny instances outside the containment
                        // regimes; the oracle must confirm that no window
                        // containing the whole shift run does better
                        split_count += 1;
                        let (_, oracle_loss) = oracle;
                        let spec = mat.spectrum();
                        let sorted = spec.expand();
                        let len = n - m;
                        let alpha_lo =
                            sorted.iter().filter(|&&v| v < mat.shift()).count();
                        let alpha_hi = alpha_lo + spec.alpha_count();
                        let mut best_containing = f64::INFINITY;
                        for start in 0..=m {
                            if start <= alpha_lo && alpha_hi <= start + len {
                                let window: Vec<(f64, usize)> = sorted
                                    [start..start + len]
                                    .iter()
                                    .map(|&v| (v, 1))
                                    .collect();
                                let mean = block_mean(&window, measure).unwrap();
                                let loss = block_loss(&window, mean, measure).unwrap();
                                best_containing = best_containing.min(loss);
                            }
                        }
                        assert!(
                            oracle_loss <= best_containing + 1e-12 * (1.0 + oracle_loss),
                            "trial {trial} {measure}: split reported but a \
                             containing window does better ({best_containing} < {oracle_loss})"
                        );
                    }
                    Err(other) => panic!("trial {trial} {measure}: {other}"),
                }
            }
        }
        println!("  structural splits observed: {split_count}");
        let secs = started.elapsed().as_secs_f64();
        assert!(secs <= 60.0, "criterion 1 took {secs:.1}s, budget 60s");
    });
}

// -------------------------------------------------------------------------
// 2. Frobenius worst-case closed form on the two-level configuration.
// -------------------------------------------------------------------------
#[test]
fn criterion_2_frobenius_worst_case_closed_form() {
    criterion("criterion 2: frobenius worst-case closed form", || {
        let (alpha, lambda) = (1.0, 3.0);
        let l = 2usize;
        for n in [20usize, 40] {
            for m in [2usize, 5] {
                let low = n - m - l; // copies of alpha
                let high = m + l; // copies of lambda
                let len = n - m;
                for k in 1..=m + 1 {
                    // window k..k+n-m-1 of the sorted spectrum holds
                    // low-k+1 copies of alpha and l+k-1 copies of lambda
                    let a_count = low - k + 1;
                    let b_count = len - a_count;
                    assert!(b_count == l + k - 1 && b_count <= high);
                    let window = [(alpha, a_count), (lambda, b_count)];
                    let mean = block_mean(&window, Measure::Frobenius).unwrap();
                    let measured = block_loss(&window, mean, Measure::Frobenius).unwrap();
                    let expected = (a_count * b_count) as f64 / len as f64
                        * (lambda - alpha)
                        * (lambda - alpha);
                    assert!(
                        (measured - expected).abs() <= 1e-12 * expected.max(1.0),
                        "n={n} m={m} k={k}: {measured} vs {expected}"
                    );
                }
            }
        }
    });
}

// -------------------------------------------------------------------------
// 3. Trust-region solutions are near-optimal against the dense oracle.
// -------------------------------------------------------------------------
#[test]
fn criterion_3_trust_region_optimality() {
    criterion("criterion 3: trust-region optimality (500 instances)", || {
        let started = Instant::now();
        let mut rng = Rng::new(0xC3);
        let eps = 1e-4;
        let mut hard_cases = 0usize;
        for trial in 0..500 {
            let n = 5 + rng.below(96);
            let r = rng.below(8.min(n));
            let cols = orthonormal_cols(n, r, &mut rng);
            let construct_hard = trial % 10 == 0 && r >= 2;
            let (alpha, offsets): (f64, Vec<f64>) = if construct_hard {
                // explicit, strictly smallest eigenvalue with a gap
                let alpha = rng.range(0.2, 1.5);
                let mut offs: Vec<f64> =
                    (0..r - 1).map(|_| rng.range(0.3, 2.0)).collect();
                offs.push(-alpha - rng.range(0.5, 2.0));
                (alpha, offs)
            } else if trial % 2 == 0 {
                // positive definite
                let alpha = rng.range(0.3, 2.0);
                (alpha, (0..r).map(|_| rng.range(-0.8 * alpha, 2.0)).collect())
            } else {
                // indefinite
                (rng.range(-1.0, 1.5), (0..r).map(|_| rng.range(-2.0, 2.0)).collect())
            };
            let b = EigenLmMatrix::from_parts(n, alpha, offsets, cols).unwrap();

            let (g, d) = if construct_hard {
                // gradient orthogonal to the bottom eigenspace: combine the
                // other explicit columns only, then a huge radius
                let mut g = vec![0.0; n];
                // bottom eigenvector is the first sorted column
                for i in 1..b.rank() {
                    axpy(rng.normal(), b.col(i), &mut g);
                }
                if norm2(&g) < 1e-6 {
                    g[0] = 0.0;
                    axpy(1.0, b.col(1), &mut g);
                }
                (g, rng.range(50.0, 200.0))
            } else {
                (rng.normal_vec(n), rng.range(0.05, 5.0))
            };

            let sol = solve_subproblem(&b, &g, d, eps).expect("solver");
            if sol.case == CaseTag::HardCase {
                hard_cases += 1;
            }
            let q = -sol.model_decrease;
            let dense = b.to_dense().unwrap();
            let oracle = dense_tr_solve(&dense, &g, d);
            let tol = 1e-9 * (1.0 + oracle.q.abs());
            assert!(
                oracle.q <= q + tol,
                "trial {trial}: structured beat the oracle? q={q} q*={}",
                oracle.q
            );
            assert!(
                q <= (1.0 - eps) * (1.0 - eps) * oracle.q + tol,
                "trial {trial} ({:?}): q={q} exceeds (1-eps)^2 q* = {}",
                sol.case,
                (1.0 - eps) * (1.0 - eps) * oracle.q
            );

            // scaled KKT residual
            let bp = b.matvec(&sol.p).unwrap();
            let mut res = 0.0_f64;
            for i in 0..n {
                res += (bp[i] + sol.sigma * sol.p[i] + g[i]).powi(2);
            }
            let spread =
                b.offsets().iter().fold(0.0_f64, |acc, o| acc.max(o.abs()));
            let scale =
                norm2(&g) + (b.shift().abs() + sol.sigma + spread) * norm2(&sol.p);
            assert!(
                res.sqrt() <= 1e-6 * scale,
                "trial {trial}: KKT residual {} vs scale {scale}",
                res.sqrt()
            );
        }
        println!("  hard cases exercised: {hard_cases}");
        assert!(hard_cases >= 20, "constructed hard cases did not trigger");
        let secs = started.elapsed().as_secs_f64();
        assert!(secs <= 120.0, "criterion 3 took {secs:.1}s, budget 120s");
    });
}

// -------------------------------------------------------------------------
// 4. With a non-binding budget the eigenpair matrix reproduces dense BFGS.
// -------------------------------------------------------------------------
#[test]
fn criterion_4_full_memory_reproduction() {
    criterion("criterion 4: full-memory BFGS reproduction", || {
        let cfg = OptimizerConfig {
            memory: 20,
            max_iter: 10,
            grad_tol_abs: 1e-14,
            grad_tol_rel_grad: 0.0,
            grad_tol_rel_f: 0.0,
            ..OptimizerConfig::default()
        };

        let qp = gen_random_qp(10, 42);
        let x0 = vec![0.0; 10];
        let report = full_memory_equivalence_mode(&qp, &x0, cfg.clone()).unwrap();
        assert!(!report.per_iteration_error.is_empty());
        for (k, err) in report.per_iteration_error.iter().enumerate() {
            assert!(*err <= 1e-9, "quadratic iteration {k}: error {err}");
        }

        let rosen = Rosenbrock::new(2);
        let report = full_memory_equivalence_mode(&rosen, &[-1.2, 1.0], cfg).unwrap();
        assert!(!report.per_iteration_error.is_empty());
        for (k, err) in report.per_iteration_error.iter().enumerate() {
            assert!(*err <= 1e-8, "rosenbrock iteration {k}: error {err}");
        }
    });
}

// -------------------------------------------------------------------------
// 5. Curvature aggregation over the (n = m) grid.
// -------------------------------------------------------------------------
#[test]
fn criterion_5_curvature_aggregation() {
    criterion("criterion 5: curvature aggregation (n = m grid, 100 trials)", || {
        let started = Instant::now();
        let cfg = AggregationConfig::default();
        for n in [4usize, 16, 64] {
            let mut errors: Vec<f64> = (0..100)
                .map(|t| {
                    // trials whose noisy-descent pairs cannot clear the
                    // curvature gate are regenerated under a disjoint seed
                    let mut seed = 1000 + t;
                    loop {
                        match aggregation_test(n, n, seed, &cfg) {
                            Ok(err) => break err,
                            Err(lrsqn::problems::AggregationError::CurvatureRetriesExhausted(_)) => {
                                seed += 1_000_000;
                            }
                            Err(other) => panic!("trial: {other}"),
                        }
                    }
                })
                .collect();
            errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = errors[errors.len() / 2];
            let max = errors[errors.len() - 1];
            println!("  n = m = {n}: median {median:.3e}, max {max:.3e}");
            assert!(median <= 1e-8, "n={n}: median {median}");
            assert!(max <= 1e-4, "n={n}: max {max}");
        }
        let secs = started.elapsed().as_secs_f64();
        assert!(secs <= 300.0, "criterion 5 took {secs:.1}s, budget 300s");
    });
}

// -------------------------------------------------------------------------
// 6. Random-QP trend (soft): the Frobenius reduction should outperform l2
//    on fixed-Hessian problems at iteration 100.
// -------------------------------------------------------------------------
#[test]
fn criterion_6_random_qp_trend_soft() {
    criterion("criterion 6: random QP trend, frobenius vs l2 (soft)", || {
        let trials = 50usize;
        let (n, m, iters, probe) = (200usize, 5usize, 150usize, 99usize);
        let mut l2_at = Vec::with_capacity(trials);
        let mut fro_at = Vec::with_capacity(trials);
        for t in 0..trials {
            let seed = 7000 + t as u64;
            let l2 = qp_distance_run(n, m, Measure::L2, seed, iters).expect("l2 run");
            let fro =
                qp_distance_run(n, m, Measure::Frobenius, seed, iters).expect("fro run");
            l2_at.push(l2[probe]);
            fro_at.push(fro[probe]);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sd = |v: &[f64], mu: f64| {
            (v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (v.len() - 1) as f64)
                .sqrt()
        };
        let (ml, mf) = (mean(&l2_at), mean(&fro_at));
        let (sl, sf) = (sd(&l2_at, ml), sd(&fro_at, mf));
        let pooled_se = ((sl * sl + sf * sf) / trials as f64).sqrt();
        println!(
            "  iteration 100 mean log10 distance: l2 {ml:.3} (sd {sl:.3}), \
             fro {mf:.3} (sd {sf:.3}), pooled SE {pooled_se:.3}"
        );
        if mf <= ml - pooled_se {
            println!("  trend holds: frobenius ahead by at least one pooled SE");
        } else {
            // soft criterion: record the shortfall instead of failing
            let path =
                std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("qp_trend_warning.txt");
            let body = format!(
                "QP trend warning: mean_fro {mf} vs mean_l2 {ml}, pooled SE {pooled_se}\n"
            );
            let _ = std::fs::write(&path, body);
            println!("  WARN: trend not established; details in {}", path.display());
        }
    });
}

// -------------------------------------------------------------------------
// 7. Logistic regression sanity, plus the optional local-gisette run.
// -------------------------------------------------------------------------
#[test]
fn criterion_7_logistic_regression_sanity() {
    criterion("criterion 7: logistic regression sanity", || {
        let data = synthetic_logistic_dataset(500, 200, 2024);
        assert_eq!(data.feature_count(), 200);

        // analytic gradient against central differences
        let obj = logistic_objective(data.clone(), 1e-4);
        let mut rng = Rng::new(9);
        let x = rng.normal_vec(200);
        let g = obj.grad(&x);
        let h = 1e-6;
        for i in (0..200).step_by(17) {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (obj.eval(&xp) - obj.eval(&xm)) / (2.0 * h);
            assert!(
                (fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()),
                "gradient component {i}: {fd} vs {}",
                g[i]
            );
        }

        for measure in [Measure::L2, Measure::Frobenius] {
            let cfg = OptimizerConfig {
                memory: 5,
                measure,
                max_iter: 200,
                ..OptimizerConfig::default()
            };
            let res = minimize(&obj, &vec![0.0; 200], cfg).unwrap();
            assert!(
                res.status.converged(),
                "{measure}: {:?} after {} iterations (gnorm {:.3e})",
                res.status,
                res.iterations,
                res.gnorm
            );
            println!("  {measure}: converged in {} iterations", res.iterations);
        }

        // optional gated run against a local gisette copy
        if let Ok(path) = std::env::var("LRSQN_GISETTE") {
            let file = std::fs::File::open(&path).expect("open gisette");
            let ds = parse_libsvm(&mut std::io::BufReader::new(file)).expect("parse gisette");
            let obj = logistic_objective(ds, 1e-4);
            let cfg = OptimizerConfig {
                memory: 2,
                measure: Measure::L2,
                max_iter: 60,
                grad_tol_abs: 1e-6,
                grad_tol_rel_grad: 0.0,
                grad_tol_rel_f: 0.0,
                ..OptimizerConfig::default()
            };
            let res = minimize(&obj, &vec![0.0; obj.dim()], cfg).unwrap();
            assert!(
                res.status.converged(),
                "gisette: {:?} with gnorm {:.3e}",
                res.status,
                res.gnorm
            );
            println!("  gisette: converged in {} iterations", res.iterations);
        } else {
            println!("  gisette run skipped (set LRSQN_GISETTE to enable)");
        }
    });
}

// -------------------------------------------------------------------------
// 8. Alignment lemma suite over random pairs, all five measures.
// -------------------------------------------------------------------------
#[test]
fn criterion_8_alignment_lemma_suite() {
    criterion("criterion 8: alignment inequalities (200 pairs, 5 measures)", || {
        let mut rng = Rng::new(0xC8);
        let random_sym = |n: usize, rng: &mut Rng| SymMat::from_fn(n, |_, _| rng.normal());
        let random_pd = |n: usize, rng: &mut Rng| {
            let m = random_sym(n, rng);
            let mut a = SymMat::from_fn(n, |i, j| dot(m.row(i), m.row(j)) / n as f64);
            for i in 0..n {
                let v = a.get(i, i) + 0.3;
                a.set_sym(i, i, v);
            }
            a
        };
        for pair_idx in 0..200 {
            let n = 2 + rng.below(11);
            // unitarily invariant norms: arbitrary symmetric pairs
            let a = random_sym(n, &mut rng);
            let b = random_sym(n, &mut rng);
            let c = aligned_matrix(&a, &b).unwrap();
            for measure in [Measure::Frobenius, Measure::L2] {
                let dc = dense_distance(&c, &a, measure).unwrap();
                let db = dense_distance(&b, &a, measure).unwrap();
                assert!(
                    dc <= db + 1e-9 * (1.0 + db),
                    "pair {pair_idx} {measure}: {dc} > {db}"
                );
            }
            // Stein losses: positive definite pairs
            let a = random_pd(n, &mut rng);
            let b = random_pd(n, &mut rng);
            let c = aligned_matrix(&a, &b).unwrap();
            for measure in
                [Measure::Stein, Measure::InverseStein, Measure::SymmetrizedStein]
            {
                let dc = dense_distance(&c, &a, measure).unwrap();
                let db = dense_distance(&b, &a, measure).unwrap();
                assert!(
                    dc <= db + 1e-9 * (1.0 + db.abs()),
                    "pair {pair_idx} {measure}: {dc} > {db}"
                );
            }
        }
    });
}

// -------------------------------------------------------------------------
// 9. Per-iteration wall time scales linearly in n at fixed m.
// -------------------------------------------------------------------------

/// Separable ill-conditioned quadratic: cheap O(n) evaluations so the
/// driver's own per-iteration work dominates the measurement.
struct SeparableQuadratic {
    diag: Vec<f64>,
}

impl SeparableQuadratic {
    fn new(n: usize) -> Self {
        // eigenvalues log-spaced over six decades keep the run busy
        let diag = (0..n)
            .map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / (n - 1) as f64))
            .collect();
        SeparableQuadratic { diag }
    }
}

impl Objective for SeparableQuadratic {
    fn dim(&self) -> usize {
        self.diag.len()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().zip(&self.diag).map(|(x, d)| d * x * x).sum::<f64>()
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.diag).map(|(x, d)| d * x).collect()
    }
}

fn timed_run(n: usize, iters: usize) -> f64 {
    let obj = SeparableQuadratic::new(n);
    let cfg = OptimizerConfig {
        memory: 5,
        measure: Measure::Frobenius,
        max_iter: iters,
        grad_tol_abs: 0.0,
        grad_tol_rel_grad: 0.0,
        grad_tol_rel_f: 0.0,
        ..OptimizerConfig::default()
    };
    let x0 = vec![1.0; n];
    let f0 = obj.eval(&x0);
    let g0 = obj.grad(&x0);
    let mut opt = Optimizer::new(cfg, x0, f0, g0).unwrap();
    let started = Instant::now();
    while opt.finished().is_none() {
        let proposal = opt.propose().unwrap();
        let f_trial = obj.eval(&proposal.x_trial);
        let outcome = opt.commit(f_trial).unwrap();
        if outcome.needs_gradient {
            let g = obj.grad(opt.x());
            opt.set_gradient(g).unwrap();
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert_eq!(opt.iterations(), iters, "run should hit the iteration cap");
    elapsed / iters as f64
}

#[test]
fn criterion_9_per_iteration_scaling() {
    criterion("criterion 9: per-iteration scaling in n", || {
        let iters = 60;
        // warm-up pass so allocator and cache state are comparable
        let _ = timed_run(2000, 10);
        let per_iter: Vec<f64> = [2000usize, 4000, 8000]
            .iter()
            .map(|&n| {
                (0..3).map(|_| timed_run(n, iters)).fold(f64::INFINITY, f64::min)
            })
            .collect();
        println!(
            "  per-iteration seconds: n=2000: {:.2e}, n=4000: {:.2e}, n=8000: {:.2e}",
            per_iter[0], per_iter[1], per_iter[2]
        );
        let r1 = per_iter[1] / per_iter[0];
        let r2 = per_iter[2] / per_iter[1];
        println!("  doubling ratios: {r1:.2}, {r2:.2}");
        assert!(r1 <= 1.6, "2000 -> 4000 per-iteration growth {r1:.2} exceeds 1.6");
        assert!(r2 <= 1.6, "4000 -> 8000 per-iteration growth {r2:.2} exceeds 1.6");
    });
}

// -------------------------------------------------------------------------
// Supporting in-loop checks shared by the criteria above: reduction losses
// recorded in the trace match the dense oracle, and BFGS keeps the matrix
// positive definite on convex problems.
// -------------------------------------------------------------------------
#[test]
fn in_loop_reduction_losses_match_oracle() {
    criterion("supplement: in-loop reduction losses match the dense oracle", || {
        let n = 50;
        let qp = gen_random_qp(n, 11);
        let cfg = OptimizerConfig {
            memory: 5,
            measure: Measure::Frobenius,
            max_iter: 60,
            grad_tol_abs: 0.0,
            grad_tol_rel_grad: 0.0,
            grad_tol_rel_f: 0.0,
            ..OptimizerConfig::default()
        };
        let x0 = vec![0.0; n];
        let f0 = qp.eval(&x0);
        let g0 = qp.grad(&x0);
        let mut opt = Optimizer::new(cfg, x0, f0, g0).unwrap();
        let mut checked = 0usize;
        let mut updates = 0usize;
        while opt.finished().is_none() {
            let proposal = opt.propose().unwrap();
            // sample every 10th iteration that actually applied an update
            let spot = if opt.last_applied_pair().is_some() {
                updates += 1;
                updates % 10 == 1
            } else {
                false
            };
            let bhat = spot.then(|| opt.proposed_hessian().unwrap().clone());
            // transient rank never exceeds the budget plus the update rank
            assert!(opt.proposed_hessian().unwrap().rank() <= 5 + 2);
            let f_trial = qp.eval(&proposal.x_trial);
            let outcome = opt.commit(f_trial).unwrap();
            if let Some(bhat) = bhat {
                if bhat.rank() > 5 {
                    let dense = bhat.to_dense().unwrap();
                    let (_, oracle_loss) =
                        dense_nearest(&dense, 5, Measure::Frobenius).unwrap();
                    assert!(
                        (outcome.reduction_loss - oracle_loss).abs()
                            <= 1e-10 * oracle_loss.max(1.0),
                        "iteration {}: loss {} vs oracle {oracle_loss}",
                        opt.iterations(),
                        outcome.reduction_loss
                    );
                    checked += 1;
                }
                // positive definiteness is maintained on this convex problem
                assert!(
                    opt.hessian().min_eigenvalue() > 0.0,
                    "iteration {}: matrix lost positive definiteness",
                    opt.iterations()
                );
            }
            if outcome.needs_gradient {
                let g = qp.grad(opt.x());
                opt.set_gradient(g).unwrap();
            }
        }
        assert!(checked >= 4, "only {checked} spot checks ran");
    });
}

#[test]
fn driver_qp_examples_converge_under_strict_tolerance() {
    criterion("supplement: QP runs reach gnorm <= 1e-5 for both measures", || {
        let n = 50;
        for measure in [Measure::L2, Measure::Frobenius] {
            let qp = gen_random_qp(n, 1);
            let cfg = OptimizerConfig {
                memory: 5,
                measure,
                max_iter: 500,
                grad_tol_abs: 1e-5,
                grad_tol_rel_grad: 0.0,
                grad_tol_rel_f: 0.0,
                ..OptimizerConfig::default()
            };
            let res = minimize(&qp, &vec![0.0; n], cfg).unwrap();
            assert!(
                res.status.converged() && res.gnorm <= 1e-5,
                "{measure}: {:?}, gnorm {:.3e} after {} iterations",
                res.status,
                res.gnorm,
                res.iterations
            );
        }
    });
}
