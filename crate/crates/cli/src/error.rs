//! CLI-level errors carrying the documented exit codes.

use std::fmt;

/// Failure categories of the command-line tool.
#[derive(Debug)]
pub enum AppError {
    /// Invalid flags or configuration (exit 2).
    Usage(String),
    /// Unusable input data or IO failure (exit 3).
    Data(String),
    /// Numerical, convergence, or training failure (exit 4).
    Numeric(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 2,
            AppError::Data(_) => 3,
            AppError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Usage(m) | AppError::Data(m) | AppError::Numeric(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for AppError {}

impl From<aipw_core::Error> for AppError {
    fn from(e: aipw_core::Error) -> Self {
        use aipw_core::Error as E;
        match e {
            E::Config(_) | E::Unsupported(_) => AppError::Usage(e.to_string()),
            E::Data(_) | E::Shape(_) => AppError::Data(e.to_string()),
            E::Domain(_) | E::Divergence { .. } | E::Convergence(_) => {
                AppError::Numeric(e.to_string())
            }
        }
    }
}
