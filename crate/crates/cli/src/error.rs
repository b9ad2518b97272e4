use bvmreg::Error;

/// Harness failure, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    /// Library errors raised while validating settings are the caller's fault.
    pub fn from_usage(e: Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match &e {
            _ if e.is_numerical() => CliError::Numerical(e.to_string()),
            Error::InvalidArchitecture(_)
            | Error::InvalidEpsilon(_)
            | Error::InvalidParameter(_)
            | Error::FractionOutOfRange(_)
            | Error::InvalidSubsample { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
