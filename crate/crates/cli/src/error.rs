use thiserror::Error;
use vna_core::{DimensionError, ProductError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{line}:{col}: {message}")]
    Parse { line: usize, col: usize, message: String },
    #[error("{line}:{col}: {message}")]
    Resolve { line: usize, col: usize, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Dimension(#[from] DimensionError),
    #[error(transparent)]
    Product(#[from] ProductError),
    #[error("cannot read `{path}`: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("demo check failed: {0}")]
    Demo(String),
}

impl CliError {
    /// 2 for a chain approximation that did not settle, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Product(ProductError::NotStable(_)) => 2,
            _ => 1,
        }
    }
}
