use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image geometry: {0}")]
    Geometry(String),

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },

    #[error("invalid kernel: {0}")]
    Kernel(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("annotation: {0}")]
    Annotation(#[from] crate::annoservice::AnnotationError),

    #[error("not enough qualifying groups: wanted {wanted}, only {available} qualify")]
    NotEnoughGroups { wanted: usize, available: usize },

    #[error("missing low-resolution input for group {0}")]
    MissingLr(String),

    #[error("image codec error for {path:?}: {source}")]
    Codec {
        path: Option<PathBuf>,
        #[source]
        source: image::ImageError,
    },

    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at {path:?} line {line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("external scorer {program}: {message}")]
    Scorer { program: String, message: String },

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
