use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("matrix not positive definite: {0}")]
    Definiteness(String),
    #[error("enumeration capacity exceeded: {0} supports (cap {1}); use sampled mode")]
    Capacity(u128, u64),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
