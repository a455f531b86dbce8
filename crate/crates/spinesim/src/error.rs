use thiserror::Error;

/// Crate-wide error type. Simulation caps are a distinguished variant so
/// callers can count capped replicates instead of treating them as failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("node budget exhausted: tree exceeded {max_nodes} nodes")]
    CapExceeded { max_nodes: usize },

    #[error("query out of range: {0}")]
    OutOfRange(String),

    #[error("tree integrity violation: {0}")]
    DataIntegrity(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("numerical solver failed: {0}")]
    Solver(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
