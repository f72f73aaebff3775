//! Error type shared by the core crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FtlError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("list of length {0} has no bracket (length must be at least 2)")]
    ListTooShort(usize),
    #[error("type bound M = {0} outside the supported range 2..=8")]
    TypeBound(usize),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid domain: {0}")]
    Domain(String),
    #[error("singular frame at the evaluation point (|det| = {0:e})")]
    SingularFrame(f64),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, FtlError>;
