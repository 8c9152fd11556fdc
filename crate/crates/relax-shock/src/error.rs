use thiserror::Error;

/// Errors surfaced by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-hyperbolic frozen coefficient matrix: {0}")]
    NonHyperbolic(String),

    #[error("singular matrix in {0}")]
    Singular(String),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("no connecting profile found: {0}")]
    NoConnection(String),

    #[error("iteration failed to converge: {0}")]
    NoConvergence(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical overflow in {0}")]
    Overflow(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
