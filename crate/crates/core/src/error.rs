use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Pnm(#[from] PnmError),

    #[error(transparent)]
    Weights(#[from] WeightsError),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("image {height}x{width} is too small, the network needs at least {min}x{min}")]
    ImageTooSmall { height: usize, width: usize, min: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failures while decoding a binary PGM/PPM file.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PnmError {
    #[error("unsupported magic number {0:?} (expected P5 or P6)")]
    BadMagic(String),
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("unsupported maxval {0} (only 255 is accepted)")]
    UnsupportedMaxval(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

/// Failures while decoding a DHFFW1 weight file.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum WeightsError {
    #[error("bad magic {0:?} (expected \"DHFFW1\")")]
    BadMagic(String),
    #[error("unsupported weight file version {0:?}")]
    Version(String),
    #[error("layer plan mismatch: {0}")]
    Plan(String),
    #[error("truncated weight file: {0}")]
    Truncated(String),
    #[error("non-finite value in layer {0}")]
    NonFinite(usize),
}
