use thiserror::Error;

/// Errors produced by the diffusion library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("graph is disconnected")]
    Disconnected,

    #[error("graph generation failed: {0}")]
    Generation(String),

    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("integration failed at t={t}: step size {step:e} underflow ({detail})")]
    Integration { t: f64, step: f64, detail: String },

    #[error("measurement failed: {0}")]
    Measurement(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
