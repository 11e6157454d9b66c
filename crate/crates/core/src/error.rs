use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the augmentation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("operating region violated: {0}")]
    OperatingRegion(String),

    #[error("training failed at epoch {epoch}, step {step}: {detail}")]
    Training {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("evaluation failed: {0}")]
    Eval(String),

    #[error("{path}: row {row}, column `{column}`: {detail}")]
    Csv {
        path: PathBuf,
        row: usize,
        column: String,
        detail: String,
    },

    #[error("failed to parse {path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
