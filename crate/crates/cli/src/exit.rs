use std::fmt;

use dla_intercept::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Config = 2,
    Data = 3,
    Degenerate = 4,
    Internal = 5,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    pub fn new(code: ExitCode, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    /// Wrap a library error raised while loading data.
    pub fn data(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::UnknownLayer { .. } => Self::from(e),
            _ => CliError::new(ExitCode::Data, e.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::UnknownLayer { .. } => ExitCode::Config,
            Error::Parse { .. }
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::InsufficientData { .. }
            | Error::Dimension { .. }
            | Error::DType { .. } => ExitCode::Data,
            Error::Degenerate { .. } | Error::BandCollision { .. } => ExitCode::Degenerate,
            Error::InvalidTensor(_) | Error::LengthMismatch { .. } | Error::Json(_) => ExitCode::Internal,
        };
        CliError::new(code, e.to_string())
    }
}
