use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("permission denied: {path}")]
    Permission { path: PathBuf },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("duplicate id `{id}` ({first} and {second})")]
    Conflict {
        id: String,
        first: PathBuf,
        second: PathBuf,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("input too short: {got} samples, need at least {need}")]
    InputTooShort { got: usize, need: usize },

    #[error("out of range: {0}")]
    Range(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("checksum mismatch for {path}")]
    Checksum { path: PathBuf },

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("wav error in {path}: {message}")]
    Wav { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        let path = path.into();
        if source.kind() == io::ErrorKind::PermissionDenied {
            Error::Permission { path }
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Coarse category used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Permission { .. } | Error::Io { .. } | Error::Wav { .. } => ErrorKind::Io,
            Error::Checksum { .. } | Error::UnsupportedVersion { .. } | Error::Parse { .. } => {
                ErrorKind::Io
            }
            Error::Conflict { .. }
            | Error::Validation(_)
            | Error::InputTooShort { .. }
            | Error::Range(_)
            | Error::InsufficientData(_)
            | Error::State(_)
            | Error::NotFound(_) => ErrorKind::Validation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
}
