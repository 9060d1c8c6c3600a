use thiserror::Error;

/// Errors raised by the distribution, integration and fitting routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("matrix is not positive definite: Cholesky pivot {index} is {pivot:e}")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("matrix is ill-conditioned: smallest/largest Cholesky pivot ratio {ratio:e}")]
    IllConditioned { ratio: f64 },

    #[error(
        "rectangle integral did not reach tolerance: estimate {estimate:e} +/- {est_error:e} after {n_points} points"
    )]
    ToleranceNotMet {
        estimate: f64,
        est_error: f64,
        n_points: usize,
    },

    #[error("conditional distribution hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("Monte Carlo estimate diverged: {0}")]
    Divergent(String),

    #[error("simulation study failed: {failures} of {replicates} replicates failed ({detail})")]
    StudyFailed {
        failures: usize,
        replicates: usize,
        detail: String,
    },

    #[error("input error: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
