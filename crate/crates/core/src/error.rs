use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("validation failed: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Validation(Vec<crate::doc_model::Violation>),

    #[error("malformed JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("bad dump label {label:?}: {reason}")]
    DumpLabel { label: String, reason: String },

    #[error("malformed WARC record #{index}: {reason}")]
    MalformedRecord { index: usize, reason: String },

    #[error("truncated WARC record #{index}: expected {expected} body bytes, got {got}")]
    Truncated {
        index: usize,
        expected: usize,
        got: usize,
    },

    #[error("training error: {0}")]
    Training(String),

    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error("cannot score: {0}")]
    Unscoreable(String),

    #[error("incompatible signatures: {0}")]
    Incompatible(String),

    #[error("mixed partition keys: {0} vs {1}")]
    MixedPartition(String, String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("incomplete run directory {dir}: missing {missing:?}")]
    IncompleteRun { dir: PathBuf, missing: Vec<String> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
