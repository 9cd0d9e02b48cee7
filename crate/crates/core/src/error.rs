use std::path::PathBuf;

/// Errors produced anywhere in the sketch pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("sketch has no points")]
    EmptySketch,
    #[error("non-finite coordinate at point {index}")]
    NonFiniteCoordinate { index: usize },
    #[error("invalid canvas {width}x{height} with pad {pad}")]
    InvalidCanvas { width: u32, height: u32, pad: f64 },

    #[error("malformed line: {0}")]
    MalformedLine(String),
    #[error("stroke {stroke} has {xs} x values but {ys} y values")]
    RaggedStroke { stroke: usize, xs: usize, ys: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("unsupported {kind} version {found} (expected {expected})")]
    VersionMismatch {
        kind: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("file holds {found} split, requested {requested}")]
    SplitMismatch { found: String, requested: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("attention has {attention} values for {points} points")]
    LengthMismatch { attention: usize, points: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("tape already consumed by a backward pass")]
    TapeConsumed,
    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        detail: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptySketch => "EmptySketch",
            Error::NonFiniteCoordinate { .. } => "NonFiniteCoordinate",
            Error::InvalidCanvas { .. } => "InvalidCanvas",
            Error::MalformedLine(_) => "MalformedLine",
            Error::RaggedStroke { .. } => "RaggedStroke",
            Error::EmptyDataset => "EmptyDataset",
            Error::VersionMismatch { .. } => "VersionMismatch",
            Error::SplitMismatch { .. } => "SplitMismatch",
            Error::Io { .. } => "IoError",
            Error::Format { .. } => "FormatError",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::LabelOutOfRange { .. } => "LabelOutOfRange",
            Error::TapeConsumed => "TapeConsumed",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
