use thiserror::Error;

/// Errors produced by the estimation, inference and oracle routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("quantile numerator and denominator must be coprime with 0 < p < q, got {p}/{q}")]
    InvalidQuantile { p: u32, q: u32 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sample has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite sample value {0}")]
    NonFiniteSample(f64),

    #[error("no data: the estimator has not seen any samples")]
    NoData,

    #[error("density estimate {0:.3e} is below the floor 1e-8; interval would be unbounded")]
    DensityFloor(f64),

    #[error("truncation radius {radius} is too small: {reason}")]
    TruncationTooSmall { radius: usize, reason: String },

    #[error("stationary solver did not converge after {iterations} iterations (last L1 change {last_change:.3e}, balance residual {residual:.3e})")]
    SolverDiverged {
        iterations: u64,
        last_change: f64,
        residual: f64,
    },

    #[error(
        "no drift window found: drift never stays below -{epsilon} inside the truncated range"
    )]
    NoDriftWindow { epsilon: f64 },

    #[error("trajectory would exceed the recording budget of {budget} points")]
    TrajectoryBudget { budget: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error on line {line}: {content:?}")]
    Parse { line: usize, content: String },
}

pub type Result<T> = std::result::Result<T, Error>;
