use thiserror::Error;

/// Errors raised by the numerical and modelling layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} did not converge within {iterations} iterations")]
    NotConverged { what: &'static str, iterations: usize },

    #[error("no feasible point found within {iterations} iterations (numerically infeasible; not a proof of infeasibility)")]
    NumericallyInfeasible { iterations: usize },

    #[error("design failed: {0}")]
    DesignFailed(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("simulation diverged at step {step}")]
    Diverged { step: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
