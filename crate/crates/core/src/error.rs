use drcvar_conic::{SolveError, SolveStatus};
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("risk level alpha must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("Wasserstein radius must be {expected}, got {got}")]
    InvalidRadius { expected: &'static str, got: f64 },
    #[error("empty sample")]
    EmptySample,
    #[error("gamma minimization did not converge after {iterations} iterations (bracket [{lo:e}, {hi:e}])")]
    DualNonConvergence { lo: f64, hi: f64, iterations: usize },
    #[error("dual forms disagree: joint {joint} vs one-dimensional {reduced}")]
    DualInconsistent { joint: f64, reduced: f64 },
    #[error("gamma {gamma} outside the open dual domain (largest eigenvalue {lambda_max})")]
    GammaOutsideDomain { gamma: f64, lambda_max: f64 },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("solver returned status {status}: {detail}")]
    SolverStatus { status: SolveStatus, detail: String },
    #[error("solution failed validation: {0}")]
    Validation(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
