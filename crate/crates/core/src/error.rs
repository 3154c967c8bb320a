use thiserror::Error;

/// Errors raised by the linear-algebra kernel, the moment formulas, the
/// oracles and the file loaders.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite: pivot {pivot} is {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("matrix is not symmetric: entries ({row}, {col}) and ({col}, {row}) differ by {deviation:e}")]
    Asymmetric { row: usize, col: usize, deviation: f64 },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("Wick enumeration refused: {0}")]
    WickRefused(String),

    #[error("trace convention calibration failed: {0}")]
    CalibrationFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
