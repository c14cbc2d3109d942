use thiserror::Error;

/// Errors raised by precondition checks across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("band plan infeasible: {0}")]
    BandPlan(String),
    #[error("filter design failed: {0}")]
    FilterDesign(String),
    #[error("stream mismatch: {0}")]
    Stream(String),
    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate basis: {0}")]
    Degenerate(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
