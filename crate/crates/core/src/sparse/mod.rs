//! Sparse matrices and the solvers built on them.

mod cg;
mod csr;
mod eigen;
mod lu;
mod ordering;

use thiserror::Error;

pub use cg::{cg_solve, CgOutcome, Preconditioner};
pub use csr::CsrMatrix;
pub use eigen::{extreme_eigenvalue_estimates, EigenEstimate, EigenOptions, ExtremeEigenvalues};
pub use lu::{factorize, LuFactorization, SymbolicLu, PIVOT_THRESHOLD};
pub use ordering::minimum_degree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("shape mismatch: expected length {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("matrix is {nrows}x{ncols}, expected square")]
    NotSquare { nrows: usize, ncols: usize },
    #[error("matrix is singular: no usable pivot for column {column} (elimination step {step})")]
    Singular { column: usize, step: usize },
    #[error("conjugate gradients broke down at iteration {iteration} (pᵀAp = {curvature:e}); matrix is not SPD")]
    Breakdown { iteration: usize, curvature: f64 },
    #[error("no convergence after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
}
