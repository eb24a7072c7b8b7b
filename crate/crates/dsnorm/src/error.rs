use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("input contains non-finite values")]
    NonFinite,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("enumeration guard exceeded: {0}")]
    GuardExceeded(String),

    /// The iterate is still returned through the calling API where possible;
    /// this variant carries the achieved gap for diagnostics.
    #[error("no convergence after {iterations} iterations (achieved gap {gap:e})")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error("objective became non-finite at iteration {iteration} (step too large?)")]
    Diverged { iteration: usize },

    #[error("subdifferential at zero is the whole dual unit ball")]
    ZeroVector,

    #[error("assertion failed: {0}")]
    Assertion(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
