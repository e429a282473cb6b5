use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("invalid fact {fact}: {message}")]
    InvalidFact { fact: String, message: String },

    #[error("span [{start}, {end}) is out of range for a sequence of length {len}")]
    SpanOutOfRange { start: usize, end: usize, len: usize },

    #[error("token id {id} is outside a vocabulary of size {vocab}")]
    OutOfVocabulary { id: usize, vocab: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unknown event `{0}`")]
    UnknownEvent(String),

    #[error("unknown {kind} `{name}` (registered: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid loss inputs: {0}")]
    LossInputs(String),

    #[error("non-finite loss: {0}")]
    NonFinite(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}
