use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] epbp_core::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),

    #[error("truncated PGM data: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
