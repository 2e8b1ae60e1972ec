use thiserror::Error;

/// Errors produced by the analysis, construction and search routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("threshold search bracket: {0}")]
    SearchBracket(String),
    #[error("consistency check failed: {0}")]
    Consistency(String),
    #[error("code construction failed: {0}")]
    Construction(String),
    #[error("search failed: {0}")]
    SearchFailure(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
