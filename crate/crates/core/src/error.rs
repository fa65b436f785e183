use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The input is too large for an exhaustive routine.
    #[error("refused: {0}")]
    Refused(String),
    /// A consistency check on a computed result failed.
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("malformed weight-field dump: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
