use std::path::PathBuf;

use crate::cg::CgRunResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid input: {0}")]
    Usage(String),

    #[error("arithmetic error: {0}")]
    Arithmetic(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error(
        "matrix not positive definite or numerical breakdown at iteration {iteration}: (p, Ap) = {curvature:e}"
    )]
    Breakdown {
        iteration: usize,
        curvature: f64,
        /// Trace and iterate up to the failing step.
        partial: Box<CgRunResult>,
    },

    #[error("eigenvalue estimation did not converge (best estimates: lambda_min={lambda_min:e}, lambda_max={lambda_max:e})")]
    EstimationFailed { lambda_min: f64, lambda_max: f64 },

    #[error("matrix is singular")]
    Singular,

    #[error("unavailable: {0}")]
    Unavailable(String),

    #[error("no stagnation detected in trace")]
    NotStagnated,

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
