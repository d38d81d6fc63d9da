use std::path::PathBuf;

use crate::model::PairKey;

/// Errors raised by the clustering library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("self-pair ({0}, {0}) is not a valid pair")]
    SelfPair(usize),

    #[error("point index {index} out of range for {n} points")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("degenerate feature vector at row {0} (zero norm)")]
    ZeroNorm(usize),

    #[error("feature vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("pair ({}, {}) is both must-link and cannot-link", .0.i, .0.j)]
    ConflictingConstraint(PairKey),

    #[error("constrained pair ({}, {}) is not part of the pair graph", .0.i, .0.j)]
    PairNotInTable(PairKey),

    #[error("exhaustive search refused for {0} points (limit is {limit})", limit = crate::engine::EXHAUSTIVE_LIMIT)]
    TooManyPoints(usize),

    #[error("no labeled points to evaluate")]
    NoLabeledPoints,

    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: byte offset {offset}: {message}")]
    Binary {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("stats report: {0}")]
    Stats(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
