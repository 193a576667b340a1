use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
///
/// Variants are grouped by the CLI exit code they map to: configuration
/// problems, data problems, and runtime or model-file failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("ragged row at {path}:{line}: expected {expected} columns, found {found}")]
    RaggedRow {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid sample weights: {0}")]
    Weights(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error("unsupported model file version {found} (this build reads version {supported})")]
    Version { found: u16, supported: u16 },

    #[error("model file checksum mismatch")]
    Checksum,

    #[error("{0}")]
    Runtime(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::RaggedRow { .. }
            | Error::Data(_)
            | Error::DimensionMismatch { .. } => 3,
            Error::Weights(_) | Error::ModelFile(_) | Error::Version { .. } | Error::Checksum | Error::Runtime(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
