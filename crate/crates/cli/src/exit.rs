use std::fmt;
use std::process::ExitCode;

use geomrl_core::GeomError;

/// Failure classes with stable exit codes.
#[derive(Debug)]
pub enum CliError {
    /// A checked property did not hold (exit 1).
    Violation(String),
    /// Bad usage, configuration or input data (exit 2).
    Usage(String),
    /// Non-finite values during computation (exit 3).
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            Self::Violation(_) => 1,
            Self::Usage(_) => 2,
            Self::Numeric(_) => 3,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Violation(m) => write!(f, "property violation: {m}"),
            Self::Usage(m) => write!(f, "error: {m}"),
            Self::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<GeomError> for CliError {
    fn from(e: GeomError) -> Self {
        if e.is_numeric() {
            Self::Numeric(e.to_string())
        } else {
            Self::Usage(e.to_string())
        }
    }
}

impl From<geomrl_tensor::TensorError> for CliError {
    fn from(e: geomrl_tensor::TensorError) -> Self {
        GeomError::from(e).into()
    }
}
