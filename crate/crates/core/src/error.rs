use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate patch: {0}")]
    DegeneratePatch(String),

    #[error("image {width}x{height} is smaller than the {required}x{required} patch")]
    ImageTooSmall {
        width: usize,
        height: usize,
        required: usize,
    },

    #[error("no usable patches: all {0} sampled patches were excluded")]
    NoUsablePatches(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid bayer frame: {0}")]
    InvalidFrame(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("malformed PGM: {0}")]
    MalformedPgm(String),

    #[error("malformed sidecar: {0}")]
    MalformedSidecar(String),

    #[error("unsupported image: {0}")]
    UnsupportedImage(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Encode { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
