use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a structural precondition (length mismatch, empty input, ...).
    #[error("{0}")]
    Structural(String),

    /// A record in a data file could not be parsed or validated.
    #[error("{path}:{line}: field `{field}`: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    /// Input data is well-formed but unusable for the requested operation.
    #[error("{0}")]
    Data(String),

    /// An internal invariant did not hold.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid rational `{0}`")]
    InvalidRational(String),

    #[error("arithmetic overflow")]
    Overflow,
}

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(
        path: impl Into<PathBuf>,
        line: usize,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Format {
            path: path.into(),
            line,
            field: field.into(),
            message: message.into(),
        }
    }
}
