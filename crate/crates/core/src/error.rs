//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error: {0}")]
    Csv(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("cell ({row}, {column}) is not numeric: {value:?}")]
    BadNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("missing value at ({row}, {column})")]
    MissingValue { row: usize, column: String },

    #[error("unseen categorical value {value:?} in column {column} (policy: reject)")]
    UnseenCategory { column: String, value: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{context}: non-finite value encountered")]
    NonFinite { context: String },

    #[error("training diverged at {unit} {index}: {detail}")]
    Diverged {
        unit: &'static str,
        index: usize,
        detail: String,
    },

    #[error("pipeline stage {stage:?} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("bundle error: {0}")]
    Bundle(String),

    #[error("serialization error: {0}")]
    Serde(String),

    #[error("metric error: {0}")]
    Metric(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub fn stage(stage: &'static str, source: Error) -> Self {
        Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    /// True for errors caused by bad user input rather than a runtime fault.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Csv(_)
                | Error::Schema(_)
                | Error::BadNumericCell { .. }
                | Error::MissingValue { .. }
                | Error::UnseenCategory { .. }
                | Error::InvalidArgument(_)
                | Error::ShapeMismatch(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
