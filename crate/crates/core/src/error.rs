use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// Each variant maps onto a stable process exit code via [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("data integrity: {0}")]
    Integrity(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("missing upstream artifact: {what}; run `{command}` first")]
    MissingStage { what: String, command: String },

    #[error("run directory {0} is locked by another invocation")]
    Locked(PathBuf),

    #[error("io error on {path}: {source}")]
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

    /// Stable process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } => 3,
            Error::Integrity(_) => 4,
            Error::Parameter(_) => 5,
            Error::Config(_) => 6,
            Error::Invariant(_) => 7,
            Error::Shape(_) => 8,
            Error::Numerical(_) => 9,
            Error::MissingStage { .. } => 10,
            Error::Locked(_) => 11,
            Error::Io { .. } => 12,
            Error::Csv(_) | Error::Json(_) => 13,
        }
    }
}
