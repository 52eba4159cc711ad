use std::io;

use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite real value {0} cannot be quantized")]
    InvalidReal(f64),

    #[error("integer {value} outside the quantized range [{min}, {max}]")]
    InvalidQuant { value: i64, min: i64, max: i64 },

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("unknown tensor `{0}`")]
    UnknownTensor(String),

    #[error("length mismatch: {left} vs {right} bytes")]
    LengthMismatch { left: usize, right: usize },

    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate baseline: top-1 {top1:.4} does not exceed {threshold:.4}")]
    DegenerateBaseline { top1: f64, threshold: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of file access rather than of the data itself.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
