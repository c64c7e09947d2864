use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Syntax error in the textual model format.
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse {
        line: usize,
        col: usize,
        msg: String,
    },

    /// Structural validation failure of a model.
    #[error("invalid model: {0}")]
    Model(String),

    /// Numerical failure (singular solve, residual too large, ...).
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// Caller violated an operation's documented precondition.
    #[error("invalid input: {0}")]
    Input(String),
}

impl Error {
    pub fn parse(line: usize, col: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            col,
            msg: msg.into(),
        }
    }
}
