use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format: {0}")]
    Format(String),

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("missing feature `{0}`")]
    MissingFeature(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("invalid perturbation spec: {0}")]
    Spec(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{} row(s) failed:\n{}", .0.len(), .0.join("\n"))]
    Rows(Vec<String>),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
