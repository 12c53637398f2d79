use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerics: {0}")]
    Numerics(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported operation: {0}")]
    UnsupportedOperation(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("anchor rejection sampling exhausted after {attempts} attempts")]
    AnchorRejectionExhausted { attempts: usize },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("truncated file: {0}")]
    TruncatedFile(String),

    #[error("bad shape: {0}")]
    BadShape(String),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("malformed description block: {0}")]
    Json(#[from] serde_json::Error),
}

/// Broad failure categories, used by the command line front-end to pick an
/// exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numerics,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Dimension(_)
            | Error::Config(_)
            | Error::UnsupportedOperation(_)
            | Error::AnchorRejectionExhausted { .. } => ErrorClass::Config,
            Error::Numerics(_) | Error::TrainingDiverged { .. } => ErrorClass::Numerics,
            Error::BadMagic { .. }
            | Error::TruncatedFile(_)
            | Error::BadShape(_)
            | Error::UnsupportedVersion(_)
            | Error::Io(_)
            | Error::Json(_) => ErrorClass::Io,
        }
    }
}

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
