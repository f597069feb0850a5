//! Error taxonomy shared by every module.
//!
//! Errors fall into three classes so that batch drivers can map them onto
//! distinct process exit codes: validation (bad inputs or configuration),
//! estimation (a fit could not be produced from the data), and numerical
//! (a computation produced an unusable result).

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum LabError {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A specification or configuration is internally inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// A model fit failed (singular design, degenerate data, ...).
    #[error("estimation error: {0}")]
    Estimation(String),
    /// A numerical procedure produced an invalid result.
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl LabError {
    /// Process exit code for the error class: validation-style errors map
    /// to 2, estimation errors to 3 and numerical errors to 4.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Domain(_) | LabError::Config(_) => 2,
            LabError::Estimation(_) => 3,
            LabError::Numerical(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(LabError::Domain("x".into()).exit_code(), 2);
        assert_eq!(LabError::Config("x".into()).exit_code(), 2);
        assert_eq!(LabError::Estimation("x".into()).exit_code(), 3);
        assert_eq!(LabError::Numerical("x".into()).exit_code(), 4);
    }
}
