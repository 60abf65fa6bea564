use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("environment `{0}` has no samples")]
    EmptyEnvironment(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    /// The trainer produced a non-finite objective or parameter.
    #[error(
        "training diverged at iteration {iteration} (objective {objective}); the learning rate is probably too large"
    )]
    Diverged { iteration: usize, objective: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    /// A file was readable but its contents violate the expected format.
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used by frontends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Validation,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Diverged { .. } | Error::Singular(_) => ErrorKind::Numeric,
            Error::DimensionMismatch(_) | Error::EmptyEnvironment(_) | Error::Invalid(_) | Error::Format { .. } => {
                ErrorKind::Validation
            }
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
