use thiserror::Error;

use crate::geodesic::GeodesicState;

pub type Result<T> = std::result::Result<T, GeoError>;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The point lies on a coordinate singularity (or outside) of an analytic chart.
    #[error("singular chart at {point:?}")]
    SingularChart { point: Vec<f64> },

    #[error("metric is not invertible at {point:?}")]
    SingularMetric { point: Vec<f64> },

    /// Integration left the chart domain; carries the last state that was valid.
    #[error("trajectory left the chart domain at t = {}", last_valid.time)]
    ChartExit { last_valid: Box<GeodesicState> },

    #[error("no geodesic found after {iterations} iterations (endpoint miss {miss:.3e})")]
    NoGeodesic { iterations: usize, miss: f64 },

    #[error("token {id}: {reason}")]
    Validation { id: u64, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error in {source_name} at line {line}, column {column}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl GeoError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GeoError::InvalidArgument(msg.into())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(GeoError::DimensionMismatch { expected, got })
    }
}
