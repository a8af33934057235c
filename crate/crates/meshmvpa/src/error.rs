use std::path::PathBuf;
use thiserror::Error;

/// Errors surfaced by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A bundle file failed to parse; `line` is 1-based within the file.
    #[error("{file} line {line}: {message}")]
    Malformed {
        file: String,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("duplicate voxel coordinates: voxels {first} and {second} both at ({x}, {y}, {z})")]
    DuplicateCoordinates {
        first: usize,
        second: usize,
        x: f64,
        y: f64,
        z: f64,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("unknown run id {0}")]
    UnknownRun(usize),

    #[error("lag {lag} must be smaller than the shortest run ({shortest} samples)")]
    LagTooLarge { lag: usize, shortest: usize },

    #[error("empty voxel mask: no score reached the threshold")]
    EmptyMask,

    #[error("training set contains fewer than two classes")]
    SingleClass,

    #[error("feature count mismatch: model expects {expected}, got {got}")]
    FeatureMismatch { expected: usize, got: usize },

    #[error("unresolved search parameter: {0}")]
    UnresolvedParameter(String),

    #[error("voxel coordinates do not lie on an integer grid: {0}")]
    NonGridCoordinates(String),

    #[error("{family} models do not expose class posteriors")]
    NoPosteriors { family: &'static str },

    #[error("malformed model data: {0}")]
    MalformedModel(String),

    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(file: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Malformed {
            file: file.to_string(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
