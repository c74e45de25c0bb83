use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the labeling and denoising pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied an argument outside an operation's domain.
    #[error("invalid input: {0}")]
    Input(String),

    /// A line of an input file could not be parsed.
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    /// Parsed data violates a model invariant.
    #[error("validation failed for scene '{scene}': {message}")]
    Validation { scene: String, message: String },

    /// Training produced a non-finite loss.
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    Numerical { epoch: usize, batch: usize },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn validation(scene: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            scene: scene.into(),
            message: msg.into(),
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: msg.into(),
        }
    }
}
