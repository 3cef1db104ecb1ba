//! Crate-wide error type, mirrored by the CLI exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("under-determined system: {0}")]
    UnderDetermined(String),
    #[error("inconsistent system: {0}")]
    Inconsistent(String),
    #[error("cross-route disagreement: {0}")]
    CrossRoute(String),
    #[error("numeric infeasibility: {0}")]
    Numeric(String),
    #[error("stabilization failure: {0}")]
    Unstable(String),
    #[error("internal consistency failure: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
