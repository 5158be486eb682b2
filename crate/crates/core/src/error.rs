use std::path::PathBuf;

use crate::optimize::OptimizationTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("control point sampling failed after {attempts} attempts: {constraint}")]
    SamplingFailure { attempts: usize, constraint: String },

    #[error("mask is empty: {0}")]
    EmptyMask(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("non-finite objective at step {step}")]
    NumericalFailure {
        step: usize,
        trace: Box<OptimizationTrace>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: msg.into(),
        }
    }
}
