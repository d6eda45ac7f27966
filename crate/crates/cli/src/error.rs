use std::fmt;

use nou_amm::NouError;

/// Exit status for bad input, configuration or parameters.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status when a numerical routine fails on valid input.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError { code: EXIT_VALIDATION, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError { code: EXIT_NUMERICAL, message: message.into() }
    }

    /// Wrap a library error, prefixing the context it arose in.
    pub fn from_nou(context: &str, e: NouError) -> Self {
        let message = if context.is_empty() { e.to_string() } else { format!("{context}: {e}") };
        if e.is_numerical() {
            CliError::numerical(message)
        } else {
            CliError::validation(message)
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<NouError> for CliError {
    fn from(e: NouError) -> Self {
        CliError::from_nou("", e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
