use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidPmf(String),
    #[error("invalid source specification: {0}")]
    InvalidSource(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("exact evaluation unsupported: {0}")]
    Unsupported(String),
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
