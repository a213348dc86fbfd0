//! Error type shared across the crate.

use std::error::Error;
use std::fmt;
use std::io;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, DmhError>;

/// Everything that can go wrong while training, encoding or evaluating.
#[derive(Debug)]
pub enum DmhError {
    /// A caller violated an operation's contract (shape mismatch, index out
    /// of range, non-orthogonal rotation, ...).
    Contract(String),
    /// An input matrix contained NaN or infinite entries.
    NonFinite(String),
    /// A configuration value is outside its documented domain.
    InvalidConfig(String),
    /// The training objective became non-finite.
    Diverged { iteration: usize },
    /// Average precision is undefined: the query has an empty relevant set.
    UndefinedAp,
    /// No query had a non-empty relevant set, so MAP/F1 cannot be averaged.
    EmptyEvaluation,
    /// A file did not conform to one of the binary formats.
    Format(String),
    /// Underlying I/O failure.
    Io(io::Error),
}

impl fmt::Display for DmhError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DmhError::Contract(msg) => write!(f, "contract violation: {msg}"),
            DmhError::NonFinite(msg) => write!(f, "non-finite input: {msg}"),
            DmhError::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            DmhError::Diverged { iteration } => {
                write!(f, "objective diverged at iteration {iteration}")
            }
            DmhError::UndefinedAp => {
                write!(f, "average precision undefined: empty relevant set")
            }
            DmhError::EmptyEvaluation => {
                write!(f, "no query has a non-empty relevant set")
            }
            DmhError::Format(msg) => write!(f, "malformed file: {msg}"),
            DmhError::Io(err) => write!(f, "i/o error: {err}"),
        }
    }
}

impl Error for DmhError {
    fn source(&self) -> Option<&(dyn Error + 'static)> {
        match self {
            DmhError::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<io::Error> for DmhError {
    fn from(err: io::Error) -> Self {
        DmhError::Io(err)
    }
}
