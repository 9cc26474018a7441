use std::path::{Path, PathBuf};

use advmark_core::error::{AttackError, DataError, EvalError, ModelError, TrainError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// Undecodable image or other unreadable input file.
    #[error("cannot ingest {path}: {message}")]
    Ingest { path: PathBuf, message: String },
    #[error("{path}: malformed JSON at `{field}`: {message}")]
    Json {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    /// Invalid or inconsistent configuration.
    #[error("config: {0}")]
    Config(String),
    #[error("report: {0}")]
    Report(String),
    #[error("missing artifacts: {}", .0.join(", "))]
    MissingArtifacts(Vec<String>),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Process exit status: 2 for configuration and usage errors, 1 for
    /// runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json { .. } | Error::MissingArtifacts(_) => 2,
            Error::Eval(EvalError::Roster(_)) => 2,
            Error::Train(TrainError::Config(_)) => 2,
            Error::Attack(AttackError::Config(_)) => 2,
            _ => 1,
        }
    }
}
