use thiserror::Error;

use crate::rational::Rational;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("degenerate spectrum at {path}: levels {index_a} and {index_b} both equal {energy}")]
    DegenerateSpectrum {
        path: String,
        index_a: usize,
        index_b: usize,
        energy: Rational,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("relative entropy is infinite: reference has zero weight at index {index}")]
    DivergenceInfinite { index: usize },

    #[error("enumeration refused: {paths} paths exceed the cap of {cap}")]
    CapExceeded { paths: f64, cap: u64 },

    #[error("internal consistency violated: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
