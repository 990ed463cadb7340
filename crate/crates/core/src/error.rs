use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid record {study_id}: {reason}")]
    InvalidRecord { study_id: String, reason: String },
    #[error("model specification: {0}")]
    Spec(String),
    #[error("chain {chain}: no finite starting point after {attempts} draws")]
    Initialization { chain: usize, attempts: usize },
    #[error("all {0} chains failed")]
    AllChainsFailed(usize),
    #[error("estimator {method}: {reason}")]
    Estimator { method: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
