use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not unitary (deviation {deviation:.3e}): {context}")]
    NonUnitary { context: String, deviation: f64 },

    #[error("matrix is not Hermitian (deviation {deviation:.3e}): {context}")]
    NonHermitian { context: String, deviation: f64 },

    #[error("matrix is numerically singular (smallest singular value {smallest:.3e})")]
    RankDeficient { smallest: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{what} did not converge (achieved {achieved:.3e})")]
    Convergence { what: String, achieved: f64 },

    #[error("invalid scenario at `{path}`: {message}")]
    Scenario { path: String, message: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn scenario(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scenario {
            path: path.into(),
            message: message.into(),
        }
    }
}
