use thiserror::Error;

use crate::container::FormatError;
use crate::entropy::CodingError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Coding(#[from] CodingError),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("layout error: {0}")]
    Layout(String),

    #[error("annotation line {line}: {message}")]
    Annotation { line: usize, message: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("unknown {kind} '{name}'")]
    UnknownStrategy { kind: &'static str, name: String },
}

/// Coarse error classes, used for process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Format,
    Capacity,
    NotFound,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io(_) => ErrorClass::Io,
            Error::Capacity(_) => ErrorClass::Capacity,
            Error::Format(FormatError::Capacity(_)) => ErrorClass::Capacity,
            Error::NotFound(_) | Error::Format(FormatError::ChunkNotFound(_)) => ErrorClass::NotFound,
            _ => ErrorClass::Format,
        }
    }
}
