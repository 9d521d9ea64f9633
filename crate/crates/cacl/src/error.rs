//! Crate-wide error type.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum CaclError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("non-finite value in {context} at step {step}")]
    NonFinite { context: String, step: usize },
}

pub type Result<T> = std::result::Result<T, CaclError>;
