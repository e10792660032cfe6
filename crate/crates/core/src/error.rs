use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's precondition (shapes, counts, sets).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A NaN or infinity appeared, or a quantity that must be nonzero was zero.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A binary file did not parse; `offset` is the byte position of the problem.
    #[error("data format error at byte {offset}: {message}")]
    DataFormat { offset: u64, message: String },

    /// Invalid user-facing configuration or arguments.
    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::DataFormat {
            offset,
            message: msg.into(),
        }
    }
}
