use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EwensError {
    #[error("argument `{name}` out of domain: {value} ({reason})")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("quadrature did not converge after {subdivisions} subdivisions (estimate {estimate:e}, error {error:e})")]
    NonConvergence {
        subdivisions: usize,
        estimate: f64,
        error: f64,
    },

    #[error("root bracketing failed: {0}")]
    RootBracket(String),

    #[error("Stirling row {n} exceeds configured maximum {max}")]
    StirlingTooLarge { n: usize, max: usize },

    #[error("insufficient draws: need at least {needed}, got {got}")]
    InsufficientDraws { needed: usize, got: usize },

    #[error("A-integral cache miss for k = {k} (cache covers n = {n})")]
    CacheMiss { n: usize, k: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Undefined(String),

    #[error("data line {line}: {message}")]
    Data { line: usize, message: String },

    #[error("data contain no observations")]
    EmptyData,
}

pub type Result<T> = std::result::Result<T, EwensError>;

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(EwensError::Domain {
            name,
            value,
            reason: "must be finite and > 0",
        })
    }
}
