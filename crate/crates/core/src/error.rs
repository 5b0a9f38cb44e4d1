use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh has no triangles left after dropping degenerate faces")]
    EmptyMesh,

    #[error("triangle {triangle} references vertex {index}, but the mesh has {count} vertices")]
    IndexOutOfRange {
        triangle: usize,
        index: u32,
        count: usize,
    },

    #[error("{what}: expected {expected} entries, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("vertex color {index} has a component outside [0, 1]")]
    ColorOutOfRange { index: usize },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("resolution mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    ResolutionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("layer count mismatch: {left} vs {right}")]
    LayerMismatch { left: usize, right: usize },

    #[error("weak-perspective scale must be positive, got {0}")]
    NonPositiveScale(f64),

    #[error("invalid range: lo ({lo}) must be below hi ({hi})")]
    InvertedRange { lo: f64, hi: f64 },

    #[error("point set is empty")]
    EmptySet,

    #[error("need more than {k} points, got {count}")]
    TooFewPoints { k: usize, count: usize },

    #[error("layer count must be in 1..=16, got {0}")]
    InvalidLayerCount(usize),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid body model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("malformed {format} data: {message}")]
    Format {
        format: &'static str,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(format: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            format,
            message: message.into(),
        }
    }
}

pub(crate) fn check_resolution(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::ResolutionMismatch {
            left_w: a.0,
            left_h: a.1,
            right_w: b.0,
            right_h: b.1,
        });
    }
    Ok(())
}
