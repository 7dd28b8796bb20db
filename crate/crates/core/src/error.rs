//! Error type shared by all modules.

use alloc::string::String;
use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by estimation, training, and data handling.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A numeric argument lies outside its mathematical domain
    /// (e.g. a probability outside `(0,1)`, a negative variance).
    Domain(String),
    /// Dimension or shape mismatch between inputs.
    Shape(String),
    /// The data cannot support the requested operation
    /// (empty treatment arm, empty training set, malformed rows).
    Data(String),
    /// Invalid or inconsistent configuration.
    Config(String),
    /// Training produced a non-finite loss.
    Divergence {
        /// Epoch (0-based) at which the loss became non-finite.
        epoch: usize,
    },
    /// An iterative solver failed to converge; the message carries
    /// diagnostics (iterations used, last objective change).
    Convergence(String),
    /// The operation is not defined for the given variant.
    Unsupported(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Divergence { epoch } => {
                write!(f, "training diverged: non-finite loss at epoch {epoch}")
            }
            Error::Convergence(msg) => write!(f, "convergence failure: {msg}"),
            Error::Unsupported(msg) => write!(f, "unsupported: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
