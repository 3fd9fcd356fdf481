use thiserror::Error;

/// Errors raised by the saddlepoint toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The complexified cgf hit a zero of cosh, where no branch of the logarithm exists.
    #[error("branch failure: cosh(alpha + i beta) vanishes at alpha={alpha}, beta={beta}")]
    BranchFailure { alpha: f64, beta: f64 },

    #[error("model domain error: {0}")]
    ModelDomain(String),

    #[error("saddle solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("saddle iterate left the domain where the Hessian is positive definite")]
    LeftDomain,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
