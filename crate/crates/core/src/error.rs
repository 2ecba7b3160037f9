use thiserror::Error;

/// Errors raised anywhere in the estimation toolkit.
#[derive(Debug, Error)]
pub enum GridError {
    /// An electrical quantity that must be nonzero was zero (e.g. an absent line).
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed or non-finite input.
    #[error("input error: {0}")]
    Input(String),

    /// Network matrices violate a structural requirement.
    #[error("model error: {0}")]
    Model(String),

    /// The power flow could not be solved.
    #[error("synthesis error: {0}")]
    Synthesis(String),

    #[error("regression error: {message} (condition number {condition:e})")]
    Regression { message: String, condition: f64 },

    /// The smallest singular subspace of the stacked data is not separated.
    #[error("TLS unstable: {0}")]
    TlsUnstable(String),

    /// A bias predictor could not be evaluated.
    #[error("analysis error: {0}")]
    Analysis(String),

    /// Measurement files that do not follow the documented layout.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GridError>;
