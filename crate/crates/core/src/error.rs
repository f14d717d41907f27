use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the voxel → tet → deform → audit pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("payload length mismatch: expected {expected} values, found {found}")]
    PayloadLength { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite coordinate in input mesh at vertex {0}")]
    NonFinite(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate bounding box")]
    DegenerateBounds,

    #[error("coordinate ({x}, {y}, {z}) out of range for resolution {resolution}")]
    OutOfRange {
        x: usize,
        y: usize,
        z: usize,
        resolution: usize,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("shape mismatch: expected {expected} elements, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("timestep {t} outside 1..={steps}")]
    Timestep { t: usize, steps: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("backtracking exhausted at step {step}: tet {tet} stays inverted after {halvings} halvings")]
    BacktrackExhausted {
        step: usize,
        tet: usize,
        halvings: usize,
    },

    #[error("non-finite gradient at step {step} (vertex {vertex})")]
    NanGradient { step: usize, vertex: usize },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::PayloadLength { .. } => "payload_length",
            Error::InvalidInput(_) => "invalid_input",
            Error::NonFinite(_) => "non_finite",
            Error::Empty(_) => "empty",
            Error::DegenerateBounds => "degenerate_bounds",
            Error::OutOfRange { .. } => "out_of_range",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::Timestep { .. } => "timestep",
            Error::Config(_) => "config",
            Error::BacktrackExhausted { .. } => "backtrack_exhausted",
            Error::NanGradient { .. } => "nan_gradient",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
