use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate scale: {0}")]
    DegenerateScale(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("size limit exceeded: {0}")]
    Size(String),
    #[error("resource budget exceeded: {0}")]
    Budget(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("grid resolution too coarse: {0}")]
    Resolution(String),
    #[error("partition out of range: {0}")]
    PartitionRange(String),
    #[error("regime check failed: {0}")]
    Regime(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
