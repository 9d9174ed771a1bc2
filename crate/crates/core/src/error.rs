//! Error type shared by every module in the crate.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two arrays that must agree in shape do not; both shapes are named.
    #[error("shape mismatch in {context}: {left:?} vs {right:?}")]
    ShapeMismatch {
        context: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// A parameter violated its precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    /// Decoding or encoding a raster file failed.
    #[error("image error on {path}: {message}")]
    ImageFile { path: PathBuf, message: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Training aborted; the message names the failing epoch/batch.
    #[error("training aborted: {0}")]
    Training(String),
}

impl Error {
    pub(crate) fn shape(context: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::ShapeMismatch {
            context,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
