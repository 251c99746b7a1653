use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("trim count {trim} too large for {count} inputs (need 2*trim < count)")]
    TrimTooLarge { trim: usize, count: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("unknown verification suite `{0}`")]
    UnknownSuite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    /// True for errors caused by a bad run description rather than by I/O
    /// or by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Json(_) | Error::UnknownSuite(_))
    }
}
