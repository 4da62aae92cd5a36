//! Error types shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible tensor shapes; both shapes are carried in the message.
    #[error("shape mismatch in {op}: left {left:?}, right {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// A caller broke an operation's contract (wrong arity, missing state, ...).
    #[error("contract violation in {op}: {msg}")]
    Contract { op: &'static str, msg: String },

    /// NaN or Inf encountered where finite values are required.
    #[error("non-finite value in {op}")]
    NonFinite { op: &'static str },

    /// Bad configuration value or malformed config file.
    #[error("config error: {0}")]
    Config(String),

    /// Invalid runtime input (e.g. out-of-vocabulary token).
    #[error("input error: {0}")]
    Input(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: usize },

    /// Energy accounting hit an operation without a pinned price.
    #[error("unpriced operation in energy accounting: {0}")]
    Unpriced(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn contract(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Contract {
            op,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
