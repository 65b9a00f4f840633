use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty state or operator")]
    Empty,

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry encountered")]
    NonFinite,

    #[error("operator is not Hermitian (max |M - M^dagger| = {0:e})")]
    NotHermitian(f64),

    #[error("degenerate spectrum (min relative eigenvalue gap {0:e})")]
    DegenerateSpectrum(f64),

    #[error("eigen-decomposition did not converge")]
    NoConvergence,

    #[error("eigenvector matrix is singular")]
    Singular,

    #[error("states are nearly orthogonal (|overlap| = {0:e})")]
    NearOrthogonal(f64),

    #[error("weak values are not consistent with any qubit two-state vector (residual {0:e})")]
    NoSolution(f64),

    #[error("2j = {0} is not a nonnegative integer")]
    InvalidSpin(f64),

    #[error("invalid direction: {0}")]
    InvalidDirection(String),

    #[error("state is not an eigenstate (residual {0:e})")]
    NotEigenstate(f64),

    #[error("post-selection branch is dead (probability {0:e})")]
    DeadBranch(f64),

    #[error("evolved state underflowed (norm {0:e})")]
    UnderflowedBranch(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
