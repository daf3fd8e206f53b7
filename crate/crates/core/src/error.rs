use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::topology::DegreeReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("coordinate {index} out of range for dimension {dim}")]
    CoordinateOutOfRange { index: usize, dim: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("numeric fault: {0}")]
    NumericFault(String),

    #[error("{0}")]
    DegreeViolation(DegreeReport),

    #[error("unknown node {0} (node ids are 1-based, graph has {1} nodes)")]
    UnknownNode(usize, usize),

    #[error(
        "too large to enumerate: {} reduced graphs exceed the budget of {budget}; \
         use sampled certification instead",
        count_text(*count)
    )]
    TooLargeToEnumerate { count: u128, budget: u128 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("did not converge within {sweeps} sweeps (last decrease {last_decrease:e})")]
    NonConvergence { sweeps: usize, last_decrease: f64 },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}

/// Counts saturate at `u128::MAX`.
fn count_text(count: u128) -> String {
    if count == u128::MAX {
        "more than 2^128".into()
    } else {
        count.to_string()
    }
}
