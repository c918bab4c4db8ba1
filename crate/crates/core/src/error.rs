use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A distribution, arrival, job, or policy parameter is out of range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A configuration file or scenario description could not be resolved.
    #[error("config error: {0}")]
    Config(String),

    /// An analytic quantity is undefined or infinite for the given inputs.
    #[error("analytic error: {0}")]
    Analytic(String),

    /// Tail or saturation estimation could not be carried out.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// A contract on a live simulation object was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
