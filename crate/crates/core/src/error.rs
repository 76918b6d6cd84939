use thiserror::Error;

/// Errors raised by the tracking library.
#[derive(Debug, Error)]
pub enum Error {
    /// The measurement geometry is infeasible for the given state.
    #[error("geometry domain error: {0}")]
    Domain(String),

    #[error("innovation covariance is not invertible")]
    SingularInnovation,

    #[error("covariance is not invertible")]
    SingularCovariance,

    /// Sigma-point square root failed after jitter retries.
    #[error("covariance square root failed after {retries} jitter retries")]
    CovarianceBreakdown { retries: usize },

    #[error("degenerate Mahalanobis distance: {0}")]
    DegenerateDistance(String),

    #[error("no candidate tracks survived initialization")]
    EmptyScenario,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
