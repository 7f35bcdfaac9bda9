//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VapoError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("{name} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("step limit {max_steps} exhausted at t = {t}")]
    StepLimit { max_steps: usize, t: f64 },

    #[error("non-finite loss at step {step}; last checkpoint retained")]
    NonFiniteLoss { step: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, VapoError>;
