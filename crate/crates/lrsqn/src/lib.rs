//! Limited-memory quasi-Newton optimization with eigenpair Hessian storage.
//!
//! The Hessian approximation is kept as a shift-plus-low-rank matrix
//! `alpha*I + E diag(offsets) E^T` whose eigendecomposition is explicit at
//! all times. Broyden-class updates grow the stored rank by at most two per
//! iteration; a nearest-matrix reduction then brings it back under the
//! memory budget by averaging a window of consecutive eigenvalues under one
//! of five dissimilarity measures (induced l2, Frobenius, Stein, inverse
//! Stein, symmetrized Stein). A trust-region driver exploits the eigenpair
//! structure so that the subproblem iterations touch nothing
//! n-dimensional.
//!
//! Module map:
//!
//! * [`lram`]      - the eigenpair representation and its arithmetic
//! * [`reduction`] - nearest limited-memory matrix solvers
//! * [`eigupdate`] - eigendecomposition refresh after a low-rank update
//! * [`qnupdate`]  - Broyden-class compact updates
//! * [`trsolve`]   - structure-exploiting trust-region subproblem solver
//! * [`driver`]    - the full trust-region optimizer loop
//! * [`problems`]  - benchmark generators (random QPs, logistic regression)
//! * [`oracle`]    - dense brute-force reference implementations
//! * [`dense`]     - dense symmetric matrix support used by the oracles
//! * [`rng`]       - deterministic random generator for reproducible runs

// index-based loops mirror the matrix formulas throughout the numeric kernels
#![allow(clippy::needless_range_loop)]

pub mod dense;
pub mod driver;
pub mod eigupdate;
pub mod lram;
pub mod oracle;
pub mod problems;
pub mod qnupdate;
pub mod reduction;
pub mod rng;
pub mod trsolve;

pub use driver::{minimize, MinimizeResult, Objective, OptimizerConfig};
pub use lram::EigenLmMatrix;
pub use reduction::{reduce, Measure};
