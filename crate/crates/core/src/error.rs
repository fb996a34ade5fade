use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("expected input dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("constant vector in {0}: correlation undefined")]
    Degenerate(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("singular normal matrix; refit with a ridge term (ridge > 0)")]
    Singular,

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("fit failed at step {step}, cluster {cluster}: {source}")]
    Provenance {
        step: usize,
        cluster: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: row {row}, column {column}: {message}")]
    Csv {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("malformed model data: {0}")]
    Format(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
