use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the trend pipeline. The command line maps them
/// onto exit codes.
#[derive(Debug, Error)]
pub enum TrendError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed corpus {path}: {message}")]
    Corpus { path: PathBuf, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("ontology mismatch: {0}")]
    Ontology(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("tokenizer error: {0}")]
    Tokenizer(String),

    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl TrendError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TrendError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corpus(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        TrendError::Corpus {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by user-supplied inputs (config, corpus files).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            TrendError::Io { .. }
                | TrendError::Corpus { .. }
                | TrendError::Config(_)
                | TrendError::InvalidInput(_)
                | TrendError::Ontology(_)
        )
    }
}

pub type Result<T, E = TrendError> = std::result::Result<T, E>;
