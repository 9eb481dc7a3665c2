use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two values whose block structures must agree do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A parameter lies outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Malformed image file; `offset` is the byte position of the problem.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn format(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }
}
