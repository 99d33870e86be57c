use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("coordinate {value} is not finite")]
    NonFinite { value: f64 },
    #[error("unknown point id {0}")]
    UnknownPoint(u64),
    #[error("epsilon must be a finite positive number, got {0}")]
    InvalidEpsilon(f64),
    #[error("box cannot be split: {0}")]
    Unsplittable(&'static str),
    #[error("invalid oracle query: {0}")]
    InvalidOracleQuery(String),
    #[error("unknown oracle `{0}` (expected `exact` or `adversarial`)")]
    UnknownOracle(String),
    #[error("unknown metric `{0}` (expected `l1`, `l2` or `linf`)")]
    UnknownMetric(String),
    #[error("unknown distribution `{0}` (expected `uniform`, `clustered` or `grid`)")]
    UnknownDistribution(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("index format: {0}")]
    Format(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}
