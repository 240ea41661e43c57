use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum SonError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("relaxed objective requires a marginal-penalty weight theta")]
    MissingTheta,

    #[error("solver diverged at iteration {iteration}: non-finite iterate (try a smaller step, current step = {step})")]
    Diverged { iteration: u64, step: f64 },

    #[error("unsupported size: {0}")]
    UnsupportedSize(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SonError>;

impl SonError {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        SonError::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SonError::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        SonError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
