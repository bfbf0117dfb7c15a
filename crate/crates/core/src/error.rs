use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("ragged row {row}: expected {expected} columns, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-finite coordinate at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dataset is empty")]
    Empty,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("point index {index} out of range for {n} points")]
    OutOfRange { index: usize, n: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("exhaustive enumeration needs {required} subsets, limit is {limit}; use the Monte-Carlo estimator instead")]
    Budget { required: u128, limit: u128 },

    #[error("data has fewer than {needed} linearly independent points (found {found})")]
    InsufficientRank { needed: usize, found: usize },

    #[error("projection was built against a different frame")]
    FrameMismatch,
}
