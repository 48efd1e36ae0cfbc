use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the precoding library and its experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system string {input:?}: {reason}")]
    Syntax { input: String, reason: String },

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("bisection could not bracket the root: {0}")]
    BracketFailure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config line {line}: {reason}")]
    ConfigParse { line: usize, reason: String },

    #[error("config validation failed: {}", .0.join("; "))]
    ConfigInvalid(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
