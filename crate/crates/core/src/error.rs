use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bit symbol {0:?}, expected '0' or '1'")]
    InvalidSymbol(char),

    #[error("circular window over an empty sequence")]
    EmptySequence,

    #[error("window start {start} out of range for length {len}")]
    WindowStart { start: usize, len: usize },

    #[error("invalid posting code: {0}")]
    InvalidCode(String),

    #[error("code is not complete; operation requires a complete prefix-free code")]
    IncompleteCode,

    #[error("tail {0} reaches or passes a codeword; parse further before expanding")]
    TailNotProper(String),

    #[error("codeword {0} is not part of the code")]
    UnknownCodeword(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("query of length {query} exceeds source length {source_len}")]
    QueryTooLong { query: usize, source_len: usize },

    #[error("every trial produced an infinite covering cost; estimate is undefined")]
    AllTrialsInfinite,

    #[error("iteration did not converge within {0} steps")]
    NoConvergence(usize),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
