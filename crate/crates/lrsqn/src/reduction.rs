//! Nearest limited-memory matrix solvers.
//!
//! Given a matrix in eigenpair form with rank above a target budget `m`, the
//! solvers here find the closest matrix whose shift eigenvalue has
//! multiplicity at least `n - m`, for one of five dissimilarity measures.
//! The optimum always consists of picking a window of `n - m` consecutive
//! eigenvalues of the sorted spectrum, replacing them with a measure-specific
//! mean, and leaving every other eigenvalue and all eigenvectors untouched.
//! The window mean becomes the new shift, so the search runs entirely on the
//! compressed spectrum; no n-dimensional data is read until the surviving
//! eigenpairs are rebased.
//!
//! The per-measure means are:
//!
//! * `L2`            - midpoint of the window extremes
//! * `Frobenius`     - arithmetic mean
//! * `Stein`         - harmonic mean
//! * `InverseStein`  - arithmetic mean
//! * `SymmetrizedStein` - geometric mean of the arithmetic and harmonic means
//!
//! For the Stein and inverse Stein measures the optimal window can exclude
//! part of the shift run when the eigenvalue ratios are extreme; completing
//! such a reduction would require materializing implicit eigenvectors, so it
//! is surfaced as [`ReduceError::StructuralSplit`] instead.

use thiserror::Error;

use crate::lram::{zero_offset_tol, EigenLmMatrix, SpectrumSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    L2,
    Frobenius,
    Stein,
    InverseStein,
    SymmetrizedStein,
}

impl Measure {
    pub const ALL: [Measure; 5] = [
        Measure::L2,
        Measure::Frobenius,
        Measure::Stein,
        Measure::InverseStein,
        Measure::SymmetrizedStein,
    ];

    /// The Stein-family measures are only defined for positive definite
    /// matrices.
    pub fn requires_positive_definite(self) -> bool {
        !matches!(self, Measure::L2 | Measure::Frobenius)
    }

    pub fn parse(s: &str) -> Option<Measure> {
        match s {
            "l2" => Some(Measure::L2),
            "fro" => Some(Measure::Frobenius),
            "stein" => Some(Measure::Stein),
            "istein" => Some(Measure::InverseStein),
            "sstein" => Some(Measure::SymmetrizedStein),
            _ => None,
        }
    }
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Measure::L2 => "l2",
            Measure::Frobenius => "fro",
            Measure::Stein => "stein",
            Measure::InverseStein => "istein",
            Measure::SymmetrizedStein => "sstein",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReduceError {
    #[error(
        "optimal window (start {window_start}) excludes part of the shift run \
         (shift {alpha}, window mean {mean}); reduction would need implicit eigenvectors"
    )]
    StructuralSplit { window_start: usize, alpha: f64, mean: f64 },
    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue}) under a Stein measure")]
    PositivityViolation { min_eigenvalue: f64 },
    #[error("non-positive eigenvalue {value} under a Stein measure")]
    NonPositiveValue { value: f64 },
    #[error("infeasible window: need 1 <= n - m, got n = {n}, m = {m}")]
    InfeasibleWindow { n: usize, m: usize },
}

/// The window of consecutive sorted eigenvalues chosen by a reduction:
/// 1-based start position, window length `n - m`, the measure-specific mean,
/// and the block objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSelection {
    pub start_index: usize,
    pub length: usize,
    pub mean_value: f64,
    pub loss: f64,
}

/// Result of [`reduce`]: the reduced matrix plus the selected window.
/// `selection` is `None` when the input already satisfied the budget.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub matrix: EigenLmMatrix,
    pub loss: f64,
    pub selection: Option<SequenceSelection>,
}

fn check_positive(values: &[(f64, usize)], measure: Measure) -> Result<(), ReduceError> {
    if measure.requires_positive_definite() {
        for &(v, _) in values {
            if v <= 0.0 {
                return Err(ReduceError::NonPositiveValue { value: v });
            }
        }
    }
    Ok(())
}

/// Measure-specific mean of a value multiset given as `(value, count)` runs.
pub fn block_mean(values: &[(f64, usize)], measure: Measure) -> Result<f64, ReduceError> {
    assert!(!values.is_empty() && values.iter().all(|r| r.1 >= 1));
    check_positive(values, measure)?;
    let lo = values.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let hi = values.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        // All means of a constant multiset are that constant, exactly.
        return Ok(lo);
    }
    let count: f64 = values.iter().map(|r| r.1 as f64).sum();
    let arith = || values.iter().map(|&(v, c)| c as f64 * v).sum::<f64>() / count;
    let harm = || count / values.iter().map(|&(v, c)| c as f64 / v).sum::<f64>();
    Ok(match measure {
        Measure::L2 => 0.5 * (lo + hi),
        Measure::Frobenius | Measure::InverseStein => arith(),
        Measure::Stein => harm(),
        Measure::SymmetrizedStein => (arith() * harm()).sqrt(),
    })
}

/// Measure-specific block objective of a value multiset against a candidate
/// mean `lambda`.
pub fn block_loss(
    values: &[(f64, usize)],
    lambda: f64,
    measure: Measure,
) -> Result<f64, ReduceError> {
    assert!(!values.is_empty() && values.iter().all(|r| r.1 >= 1));
    check_positive(values, measure)?;
    if measure.requires_positive_definite() && lambda <= 0.0 {
        return Err(ReduceError::NonPositiveValue { value: lambda });
    }
    Ok(match measure {
        Measure::L2 => values
            .iter()
            .map(|&(v, _)| (v - lambda).abs())
            .fold(0.0, f64::max),
        Measure::Frobenius => values
            .iter()
            .map(|&(v, c)| c as f64 * (v - lambda) * (v - lambda))
            .sum(),
        Measure::Stein => values
            .iter()
            .map(|&(v, c)| {
                let ratio = lambda / v;
                c as f64 * (ratio - ratio.ln())
            })
            .sum(),
        Measure::InverseStein => values
            .iter()
            .map(|&(v, c)| {
                let ratio = v / lambda;
                c as f64 * (ratio - ratio.ln())
            })
            .sum(),
        Measure::SymmetrizedStein => values
            .iter()
            .map(|&(v, c)| c as f64 * (v / lambda + lambda / v))
            .sum(),
    })
}

/// Sub-multiset of `runs` covered by sorted positions `[lo, hi]` (1-based,
/// inclusive).
fn window_values(runs: &[(f64, usize)], lo: usize, hi: usize) -> Vec<(f64, usize)> {
    let mut out = Vec::new();
    let mut start = 1usize;
    for &(value, count) in runs {
        let end = start + count - 1;
        let a = lo.max(start);
        let b = hi.min(end);
        if a <= b {
            out.push((value, b - a + 1));
        }
        start = end + 1;
        if start > hi {
            break;
        }
    }
    out
}

/// Find the length `n - m` window of the sorted spectrum with the smallest
/// block loss under `measure`. Ties go to the smallest start index. Runs on
/// the compressed spectrum, so the cost is quadratic in the number of runs,
/// not in n.
pub fn select_sequence(
    spectrum: &SpectrumSummary,
    m: usize,
    measure: Measure,
) -> Result<SequenceSelection, ReduceError> {
    let n = spectrum.total();
    if m >= n {
        return Err(ReduceError::InfeasibleWindow { n, m });
    }
    let runs = spectrum.runs();
    let length = n - m;
    let mut best: Option<SequenceSelection> = None;
    for start in 1..=m + 1 {
        let values = window_values(&runs, start, start + length - 1);
        let mean = block_mean(&values, measure)?;
        let loss = block_loss(&values, mean, measure)?;
        if best.as_ref().is_none_or(|b| loss < b.loss) {
            best = Some(SequenceSelection { start_index: start, length, mean_value: mean, loss });
        }
    }
    Ok(best.expect("at least one window"))
}

/// Reduce `mat` to rank at most `m` under `measure`.
///
/// The new shift is the selected window mean; eigenpairs whose eigenvalues
/// fall inside the window are deleted, and the survivors keep their
/// eigenvectors and absolute eigenvalues with offsets rebased against the
/// new shift. Inputs already within budget are returned unchanged with zero
/// loss.
pub fn reduce(
    mat: &EigenLmMatrix,
    m: usize,
    measure: Measure,
) -> Result<Reduction, ReduceError> {
    let mut work = mat.clone();
    work.fold_zero_offsets();
    if work.rank() <= m {
        return Ok(Reduction { matrix: work, loss: 0.0, selection: None });
    }
    if measure.requires_positive_definite() {
        let min = work.min_eigenvalue();
        if min <= 0.0 {
            return Err(ReduceError::PositivityViolation { min_eigenvalue: min });
        }
    }
    let spectrum = work.spectrum();
    let sel = select_sequence(&spectrum, m, measure)?;

    let n = work.dim();
    let rank = work.rank();
    let alpha = work.shift();
    let alpha_count = n - rank;
    // Sorted position of the first shift copy: explicit eigenvalues below the
    // shift come first.
    let below = (0..rank).filter(|&i| work.eigenvalue(i) < alpha).count();
    let (win_lo, win_hi) = (sel.start_index, sel.start_index + sel.length - 1);
    let (alpha_lo, alpha_hi) = (below + 1, below + alpha_count);

    if alpha_count > 0
        && sel.mean_value != alpha
        && !(win_lo <= alpha_lo && alpha_hi <= win_hi)
    {
        return Err(ReduceError::StructuralSplit {
            window_start: sel.start_index,
            alpha,
            mean: sel.mean_value,
        });
    }

    // Sorted position of explicit pair i (1-based): pairs below the shift sit
    // at their column index + 1; pairs above are displaced by the shift run.
    let position = |i: usize| -> usize {
        if i < below {
            i + 1
        } else {
            i + 1 + alpha_count
        }
    };
    let mut offsets = Vec::new();
    let mut cols = Vec::new();
    for i in 0..rank {
        let pos = position(i);
        if pos >= win_lo && pos <= win_hi {
            continue; // averaged into the new shift
        }
        offsets.push(work.eigenvalue(i) - sel.mean_value);
        cols.extend_from_slice(work.col(i));
    }
    debug_assert!(offsets.len() <= m);
    let mut matrix = EigenLmMatrix::from_parts_unchecked(n, sel.mean_value, offsets, cols);
    matrix.fold_zero_offsets();
    Ok(Reduction { matrix, loss: sel.loss, selection: Some(sel) })
}

/// Clamp the shift and every explicit eigenvalue to `[-lambda_max,
/// lambda_max]`, keeping the eigenvectors. Exact for the l2 measure.
pub fn project_interval(mat: &EigenLmMatrix, lambda_max: f64) -> EigenLmMatrix {
    assert!(lambda_max > 0.0, "lambda_max must be positive");
    let alpha = mat.shift().clamp(-lambda_max, lambda_max);
    let mut offsets = Vec::with_capacity(mat.rank());
    let mut cols = Vec::with_capacity(mat.rank() * mat.dim());
    let tol = zero_offset_tol(alpha);
    for i in 0..mat.rank() {
        let value = mat.eigenvalue(i).clamp(-lambda_max, lambda_max);
        let offset = value - alpha;
        if offset.abs() > tol {
            offsets.push(offset);
            cols.extend_from_slice(mat.col(i));
        }
    }
    EigenLmMatrix::from_parts_unchecked(mat.dim(), alpha, offsets, cols)
}
