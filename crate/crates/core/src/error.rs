use std::path::PathBuf;

use thiserror::Error;

use crate::layer::LayerId;

pub type Result<T, E = FrodoError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FrodoError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: not an FTEN v1 f32 file: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: corrupt file: {reason}")]
    CorruptFile { path: PathBuf, reason: String },

    #[error("non-finite value at element {index}")]
    NonFiniteData { index: usize },

    #[error("duplicate sample id {0:?}")]
    DuplicateSample(String),

    #[error("record {record}: unknown label {token:?} (expected in, ood or unlabeled)")]
    BadLabel { record: u64, token: String },

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("need at least 2 samples to fit, got {0}")]
    InsufficientSamples(u64),

    #[error("{layer}: covariance is singular even with diagonal jitter {max_jitter:e}")]
    SingularCovariance { layer: LayerId, max_jitter: f64 },

    #[error("no fitted statistics for layer {0}")]
    MissingStats(LayerId),

    #[error("no features supplied for layer {0}")]
    MissingFeature(LayerId),

    #[error("sum_z fusion needs calibration for layer {0}")]
    MissingCalibration(LayerId),

    #[error("not a probability vector: {0}")]
    NotAProbabilityVector(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid stats bundle: {0}")]
    InvalidBundle(String),

    #[error("{path}: CSV error: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: JSON error: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<FrodoError>,
    },
}

/// Coarse classification used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

impl FrodoError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FrodoError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        FrodoError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error beneath any context wrappers.
    pub fn root(&self) -> &FrodoError {
        match self {
            FrodoError::Context { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self.root() {
            FrodoError::Io { .. } => ErrorKind::Io,
            FrodoError::Csv { source, .. } if source.is_io_error() => ErrorKind::Io,
            FrodoError::SingularCovariance { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Validation,
        }
    }
}
