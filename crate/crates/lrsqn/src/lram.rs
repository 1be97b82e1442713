//! Shift-plus-low-rank symmetric matrices stored in eigenpair form.
//!
//! A matrix `B = alpha*I + E diag(offsets) E^T` is kept as the scalar shift
//! `alpha`, an n x r column-orthonormal block `E` of explicit eigenvectors,
//! and the r eigenvalue offsets (eigenvalue minus alpha). Every vector
//! orthogonal to the columns of `E` is an implicit eigenvector with
//! eigenvalue `alpha`, so the representation fixes the complete
//! eigendecomposition while storing only n*r + r + 1 scalars.
//!
//! Offsets rather than absolute eigenvalues are stored because memory
//! reduction rewrites the shift; the surviving eigenpairs then only need
//! their offsets rebased. Eigenpairs are kept sorted by eigenvalue
//! (ascending) and offsets that are numerically zero are folded into the
//! shift, so equal matrices have equal representations.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::dense::{axpy, dot, SymMat};

/// Largest dimension [`EigenLmMatrix::to_dense`] will materialize.
pub const DENSE_GUARD: usize = 2000;

/// Relative tolerance used to fold near-zero offsets into the shift.
pub fn zero_offset_tol(alpha: f64) -> f64 {
    1e-12 * alpha.abs().max(1.0)
}

/// Maximum allowed deviation of E^T E from the identity.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum LramError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("eigenvector block is not column-orthonormal (max deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },
    #[error("dense materialization guard exceeded: n = {n} > {guard}")]
    DenseGuardExceeded { n: usize, guard: usize },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// `alpha*I + E diag(offsets) E^T` in eigenpair form.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenLmMatrix {
    n: usize,
    alpha: f64,
    /// Eigenvalue offsets, ascending; length r.
    offsets: Vec<f64>,
    /// Column-major n x r eigenvector block.
    cols: Vec<f64>,
}

impl EigenLmMatrix {
    /// The pure shift `alpha*I` (rank 0).
    pub fn shifted_identity(n: usize, alpha: f64) -> Self {
        EigenLmMatrix { n, alpha, offsets: Vec::new(), cols: Vec::new() }
    }

    /// Build from parts, validating orthonormality and canonicalizing the
    /// eigenpair order. `cols` is column-major with `offsets.len()` columns
    /// of length `n`. Offsets are kept as given (no folding); callers that
    /// produce nearly-zero offsets fold them explicitly.
    pub fn from_parts(
        n: usize,
        alpha: f64,
        offsets: Vec<f64>,
        cols: Vec<f64>,
    ) -> Result<Self, LramError> {
        let r = offsets.len();
        if cols.len() != n * r {
            return Err(LramError::DimensionMismatch { expected: n * r, got: cols.len() });
        }
        let mat = Self::from_parts_unchecked(n, alpha, offsets, cols);
        let deviation = mat.orthonormality_defect();
        if deviation > ORTHONORMALITY_TOL {
            return Err(LramError::NotOrthonormal { deviation });
        }
        Ok(mat)
    }

    /// As [`from_parts`](Self::from_parts) but without the O(n r^2)
    /// orthonormality check. Used by the update pipeline, which constructs
    /// the block orthonormal by design.
    pub(crate) fn from_parts_unchecked(
        n: usize,
        alpha: f64,
        offsets: Vec<f64>,
        cols: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(cols.len(), n * offsets.len());
        let mut mat = EigenLmMatrix { n, alpha, offsets, cols };
        mat.sort_pairs();
        mat
    }

    fn sort_pairs(&mut self) {
        let r = self.rank();
        if r < 2 {
            return;
        }
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&i, &j| self.offsets[i].partial_cmp(&self.offsets[j]).unwrap());
        if order.iter().enumerate().all(|(k, &i)| k == i) {
            return;
        }
        let offsets = order.iter().map(|&i| self.offsets[i]).collect();
        let mut cols = Vec::with_capacity(self.cols.len());
        for &i in &order {
            cols.extend_from_slice(&self.cols[i * self.n..(i + 1) * self.n]);
        }
        self.offsets = offsets;
        self.cols = cols;
    }

    /// Drop eigenpairs whose offset is numerically zero, folding them into
    /// the shift.
    pub(crate) fn fold_zero_offsets(&mut self) {
        let tol = zero_offset_tol(self.alpha);
        if self.offsets.iter().all(|o| o.abs() > tol) {
            return;
        }
        let n = self.n;
        let keep: Vec<usize> =
            (0..self.rank()).filter(|&i| self.offsets[i].abs() > tol).collect();
        self.offsets = keep.iter().map(|&i| self.offsets[i]).collect();
        let mut cols = Vec::with_capacity(keep.len() * n);
        for &i in &keep {
            cols.extend_from_slice(&self.cols[i * n..(i + 1) * n]);
        }
        self.cols = cols;
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.offsets.len()
    }

    pub fn shift(&self) -> f64 {
        self.alpha
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// Absolute eigenvalue of explicit pair `i`.
    pub fn eigenvalue(&self, i: usize) -> f64 {
        self.alpha + self.offsets[i]
    }

    /// Smallest eigenvalue of the full matrix, implicit shift included.
    pub fn min_eigenvalue(&self) -> f64 {
        let explicit = self.offsets.first().map(|o| self.alpha + o);
        if self.rank() < self.n {
            explicit.map_or(self.alpha, |e| e.min(self.alpha))
        } else {
            explicit.unwrap_or(self.alpha)
        }
    }

    /// Largest eigenvalue of the full matrix.
    pub fn max_eigenvalue(&self) -> f64 {
        let explicit = self.offsets.last().map(|o| self.alpha + o);
        if self.rank() < self.n {
            explicit.map_or(self.alpha, |e| e.max(self.alpha))
        } else {
            explicit.unwrap_or(self.alpha)
        }
    }

    pub fn col(&self, i: usize) -> &[f64] {
        &self.cols[i * self.n..(i + 1) * self.n]
    }

    pub(crate) fn cols_flat(&self) -> &[f64] {
        &self.cols
    }

    pub fn orthonormality_defect(&self) -> f64 {
        let r = self.rank();
        let mut worst = 0.0_f64;
        for i in 0..r {
            for j in 0..=i {
                let g = dot(self.col(i), self.col(j));
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - want).abs());
            }
        }
        worst
    }

    /// `alpha*x + E (offsets .* (E^T x))` in O(n r).
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, LramError> {
        if x.len() != self.n {
            return Err(LramError::DimensionMismatch { expected: self.n, got: x.len() });
        }
        let mut y: Vec<f64> = x.iter().map(|v| self.alpha * v).collect();
        for i in 0..self.rank() {
            let col = self.col(i);
            let c = self.offsets[i] * dot(col, x);
            axpy(c, col, &mut y);
        }
        Ok(y)
    }

    /// Compressed sorted eigenvalue multiset.
    pub fn spectrum(&self) -> SpectrumSummary {
        let tol = zero_offset_tol(self.alpha);
        let mut folded = 0usize;
        let mut values: Vec<f64> = Vec::with_capacity(self.rank());
        for &o in &self.offsets {
            if o.abs() <= tol {
                folded += 1;
            } else {
                values.push(self.alpha + o);
            }
        }
        // offsets are sorted, so values are too
        let mut below = Vec::new();
        let mut above = Vec::new();
        let mut i = 0;
        while i < values.len() {
            let mut count = 1;
            while i + count < values.len() && values[i + count] == values[i] {
                count += 1;
            }
            if values[i] < self.alpha {
                below.push((values[i], count));
            } else {
                above.push((values[i], count));
            }
            i += count;
        }
        SpectrumSummary {
            below,
            alpha: self.alpha,
            alpha_count: self.n - self.rank() + folded,
            above,
        }
    }

    /// Dense materialization, for tests and oracles only.
    pub fn to_dense(&self) -> Result<SymMat, LramError> {
        if self.n > DENSE_GUARD {
            return Err(LramError::DenseGuardExceeded { n: self.n, guard: DENSE_GUARD });
        }
        let mut m = SymMat::scaled_identity(self.n, self.alpha);
        for i in 0..self.rank() {
            m.add_outer(self.offsets[i], self.col(i));
        }
        Ok(m)
    }

    /// Text form: line 1 `n r alpha`, line 2 the r offsets, then the r
    /// eigenvector columns, one per line with n entries each.
    pub fn write_text(&self, w: &mut impl Write) -> Result<(), LramError> {
        let mut line = String::new();
        writeln!(w, "{} {} {}", self.n, self.rank(), self.alpha)?;
        for (i, o) in self.offsets.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            write!(line, "{o}").expect("write to string");
        }
        writeln!(w, "{line}")?;
        for i in 0..self.rank() {
            line.clear();
            for (j, v) in self.col(i).iter().enumerate() {
                if j > 0 {
                    line.push(' ');
                }
                write!(line, "{v}").expect("write to string");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_text(r: &mut impl BufRead) -> Result<Self, LramError> {
        let parse_err = |line: usize, message: &str| LramError::Parse {
            line,
            message: message.to_string(),
        };
        let mut header = String::new();
        r.read_line(&mut header)?;
        let mut it = header.split_whitespace();
        let n: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(1, "expected dimension n"))?;
        let rank: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(1, "expected rank r"))?;
        let alpha: f64 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(1, "expected shift alpha"))?;
        if it.next().is_some() {
            return Err(parse_err(1, "trailing tokens after `n r alpha`"));
        }

        let mut offsets_line = String::new();
        r.read_line(&mut offsets_line)?;
        let offsets: Vec<f64> = offsets_line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| parse_err(2, &format!("bad offset: {e}")))?;
        if offsets.len() != rank {
            return Err(parse_err(2, &format!("expected {rank} offsets, got {}", offsets.len())));
        }

        let mut cols = Vec::with_capacity(n * rank);
        let mut line_no = 2usize;
        let mut buf = String::new();
        while cols.len() < n * rank {
            buf.clear();
            line_no += 1;
            if r.read_line(&mut buf)? == 0 {
                return Err(parse_err(line_no, "unexpected end of input in eigenvector data"));
            }
            for t in buf.split_whitespace() {
                let v: f64 =
                    t.parse().map_err(|e| parse_err(line_no, &format!("bad entry: {e}")))?;
                cols.push(v);
                if cols.len() > n * rank {
                    return Err(parse_err(line_no, "more eigenvector entries than n*r"));
                }
            }
        }
        Self::from_parts(n, alpha, offsets, cols)
    }
}

/// Compressed sorted eigenvalue multiset: runs strictly below the shift, the
/// shift run itself, and runs strictly above. Counts sum to n.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSummary {
    below: Vec<(f64, usize)>,
    alpha: f64,
    alpha_count: usize,
    above: Vec<(f64, usize)>,
}

impl SpectrumSummary {
    /// Assemble a summary directly. Values must be strictly increasing
    /// across `below`, the shift, and `above`.
    pub fn new(
        below: Vec<(f64, usize)>,
        alpha: f64,
        alpha_count: usize,
        above: Vec<(f64, usize)>,
    ) -> Self {
        let s = SpectrumSummary { below, alpha, alpha_count, above };
        debug_assert!(
            s.runs().windows(2).all(|w| w[0].0 < w[1].0),
            "spectrum runs must be strictly increasing"
        );
        s
    }

    pub fn below(&self) -> &[(f64, usize)] {
        &self.below
    }

    pub fn above(&self) -> &[(f64, usize)] {
        &self.above
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn alpha_count(&self) -> usize {
        self.alpha_count
    }

    pub fn total(&self) -> usize {
        self.below.iter().map(|r| r.1).sum::<usize>()
            + self.alpha_count
            + self.above.iter().map(|r| r.1).sum::<usize>()
    }

    /// All runs in ascending value order (the shift run included when
    /// nonempty), as `(value, count)`.
    pub fn runs(&self) -> Vec<(f64, usize)> {
        let mut runs = Vec::with_capacity(self.below.len() + 1 + self.above.len());
        runs.extend_from_slice(&self.below);
        if self.alpha_count > 0 {
            runs.push((self.alpha, self.alpha_count));
        }
        runs.extend_from_slice(&self.above);
        runs
    }

    /// Expanded eigenvalue list, ascending. Test support; O(n).
    pub fn expand(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total());
        for (v, c) in self.runs() {
            out.extend(std::iter::repeat_n(v, c));
        }
        out
    }

    pub fn min_value(&self) -> f64 {
        self.runs().first().map(|r| r.0).unwrap_or(self.alpha)
    }

    pub fn max_value(&self) -> f64 {
        self.runs().last().map(|r| r.0).unwrap_or(self.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::testutil::{random_instance, random_orthonormal_cols};

    fn e1(n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        v
    }

    #[test]
    fn matvec_pure_shift() {
        let m = EigenLmMatrix::shifted_identity(2, 2.0);
        assert_eq!(m.matvec(&[1.0, 1.0]).unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn matvec_single_pair() {
        let m = EigenLmMatrix::from_parts(3, 0.0, vec![3.0], e1(3)).unwrap();
        assert_eq!(m.matvec(&e1(3)).unwrap(), vec![3.0, 0.0, 0.0]);
    }

    #[test]
    fn matvec_dimension_mismatch() {
        let m = EigenLmMatrix::shifted_identity(3, 1.0);
        assert!(matches!(
            m.matvec(&[1.0, 2.0]),
            Err(LramError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn matvec_matches_dense_on_random() {
        let mut rng = Rng::new(99);
        let m = random_instance(12, 3, &mut rng);
        let dense = m.to_dense().unwrap();
        for _ in 0..10 {
            let x = rng.normal_vec(12);
            let a = m.matvec(&x).unwrap();
            let b = dense.matvec(&x);
            for i in 0..12 {
                assert!((a[i] - b[i]).abs() <= 1e-12 * (1.0 + b[i].abs()));
            }
        }
    }

    #[test]
    fn matvec_orthogonal_vector_sees_only_the_shift() {
        let mut rng = Rng::new(17);
        let m = random_instance(10, 3, &mut rng);
        // Orthogonalize a random vector against all explicit columns.
        let mut v = rng.normal_vec(10);
        for i in 0..m.rank() {
            let c = dot(&v, m.col(i));
            axpy(-c, m.col(i), &mut v);
        }
        let y = m.matvec(&v).unwrap();
        for i in 0..10 {
            assert!((y[i] - m.shift() * v[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn spectrum_examples() {
        let cols = random_orthonormal_cols(4, 2, &mut Rng::new(1));
        let m = EigenLmMatrix::from_parts(4, 1.0, vec![2.0, -0.5], cols).unwrap();
        let s = m.spectrum();
        assert_eq!(s.below(), &[(0.5, 1)]);
        assert_eq!(s.alpha_count(), 2);
        assert_eq!(s.above(), &[(3.0, 1)]);

        let s = EigenLmMatrix::shifted_identity(5, 0.0).spectrum();
        assert_eq!(s.alpha_count(), 5);
        assert!(s.below().is_empty() && s.above().is_empty());

        // near-zero offset folds into the shift run
        let cols = random_orthonormal_cols(6, 2, &mut Rng::new(2));
        let m = EigenLmMatrix::from_parts(6, 1.0, vec![1e-14, 2.0], cols).unwrap();
        let s = m.spectrum();
        assert_eq!(s.alpha_count(), 5);
        assert_eq!(s.above(), &[(3.0, 1)]);
        assert!(s.below().is_empty());
    }

    #[test]
    fn to_dense_trivial() {
        let m = EigenLmMatrix::shifted_identity(2, 1.0);
        let d = m.to_dense().unwrap();
        assert_eq!(d.get(0, 0), 1.0);
        assert_eq!(d.get(1, 1), 1.0);
        assert_eq!(d.get(0, 1), 0.0);

        let m = EigenLmMatrix::from_parts(2, 0.0, vec![2.0], e1(2)).unwrap();
        let d = m.to_dense().unwrap();
        assert_eq!(d.get(0, 0), 2.0);
        assert_eq!(d.get(1, 1), 0.0);
    }

    #[test]
    fn dense_guard() {
        let m = EigenLmMatrix::shifted_identity(2001, 1.0);
        assert!(matches!(m.to_dense(), Err(LramError::DenseGuardExceeded { .. })));
    }

    #[test]
    fn spectrum_agrees_with_dense_eigensolver() {
        let mut rng = Rng::new(23);
        for _ in 0..20 {
            let n = 5 + rng.below(10);
            let r = 1 + rng.below(4.min(n - 1));
            let m = random_instance(n, r, &mut rng);
            let spec = m.spectrum().expand();
            let eig = m.to_dense().unwrap().eigen(100).unwrap();
            assert_eq!(spec.len(), n);
            for (a, b) in spec.iter().zip(&eig.values) {
                assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn from_parts_rejects_non_orthonormal() {
        let cols = vec![1.0, 1.0, 0.0]; // not unit norm
        assert!(matches!(
            EigenLmMatrix::from_parts(3, 0.0, vec![1.0], cols),
            Err(LramError::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn pairs_sorted_by_eigenvalue() {
        let cols = random_orthonormal_cols(5, 3, &mut Rng::new(9));
        let m = EigenLmMatrix::from_parts(5, 1.0, vec![2.0, -1.0, 0.5], cols).unwrap();
        assert_eq!(m.offsets(), &[-1.0, 0.5, 2.0]);
        // still orthonormal after the permutation
        assert!(m.orthonormality_defect() <= 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let mut rng = Rng::new(31);
        let m = random_instance(7, 3, &mut rng);
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let back = EigenLmMatrix::read_text(&mut buf.as_slice()).unwrap();
        assert_eq!(m, back);

        let m0 = EigenLmMatrix::shifted_identity(4, -0.5);
        let mut buf = Vec::new();
        m0.write_text(&mut buf).unwrap();
        let back = EigenLmMatrix::read_text(&mut buf.as_slice()).unwrap();
        assert_eq!(m0, back);
    }

    #[test]
    fn text_parse_errors_carry_line_numbers() {
        let bad = "3 1\n"; // missing alpha
        let err = EigenLmMatrix::read_text(&mut bad.as_bytes()).unwrap_err();
        assert!(matches!(err, LramError::Parse { line: 1, .. }));

        let bad = "2 1 0.0\n1.0\n0.6 0.6\n"; // not orthonormal
        assert!(matches!(
            EigenLmMatrix::read_text(&mut bad.as_bytes()),
            Err(LramError::NotOrthonormal { .. })
        ));
    }
}
