use thiserror::Error;

/// Errors produced by the model, covariance, prediction and estimation layers.
#[derive(Debug, Clone, Error)]
pub enum SddeError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("model is not stationary: {0}")]
    NotStationary(String),

    #[error("stationarity could not be certified: {0}")]
    IndeterminateStationarity(String),

    #[error("covariance grid does not cover the required lags: {0}")]
    InsufficientCoverage(String),

    #[error("prediction ladder failed at level {level}: {reason}")]
    Ladder { level: usize, reason: String },

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("numerical tolerance not reached: {0}")]
    ToleranceNotReached(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("simulated path diverged: |X({t})| = {value:e} exceeds the overflow guard")]
    PathDiverged { t: f64, value: f64 },

    #[error("estimation failed: {0}")]
    EstimationFailed(String),
}

pub type Result<T> = std::result::Result<T, SddeError>;
