use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is not symmetric: max asymmetry {asymmetry:e} exceeds {tolerance:e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eigenvalue:e}")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("basis columns are not orthonormal: deviation {deviation:e}")]
    NotOrthonormal { deviation: f64 },

    #[error("epsilon grid must be nonempty, positive and strictly decreasing")]
    InvalidEpsGrid,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("coercivity failure: delta = {delta:e} is below the floor {floor:e}")]
    CoercivityFailure { delta: f64, floor: f64 },

    #[error("coercivity constant is undefined for the trivial subspace")]
    EmptySubspace,

    #[error("linear solve failed: {0}")]
    SolverFailure(String),

    #[error("power iteration did not converge within {iterations} steps")]
    PowerIterationStalled { iterations: usize },

    #[error("perturbation bound violated at node {node}: norm {norm:e} exceeds {bound:e}")]
    BoundViolation { node: usize, norm: f64, bound: f64 },

    #[error("index {index} out of range (max {max})")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}
