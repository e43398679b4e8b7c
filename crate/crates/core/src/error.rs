use crate::series::Interval;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical failure on interval [{}, {}): {reason}", interval.start, interval.end)]
    Numerical { interval: Interval, reason: String },

    #[error("numerical failure: {0}")]
    Factorization(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) | Error::Parse { .. } | Error::Schema(_) => 1,
            Error::Io(_) => 2,
            Error::Numerical { .. } | Error::Factorization(_) => 3,
        }
    }
}
