use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("transmitter at distance {distance} is closer than the minimum distance {min_distance}")]
    DistanceFloor { distance: f64, min_distance: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: u64, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("solver did not converge after {iterations} iterations (KKT residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("covariance matrix is singular (det {det:e}); features are degenerate or collinear")]
    SingularCovariance { det: f64 },

    #[error("detector has no calibrated threshold")]
    Uncalibrated,

    #[error("{cell}: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Attaches experiment-grid coordinates to an error.
    pub fn in_cell(self, cell: impl Into<String>) -> Self {
        Error::Cell { cell: cell.into(), source: Box::new(self) }
    }
}
