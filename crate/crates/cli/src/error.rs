use std::fmt;

/// Exit code 2 for IO failures, 3 for invalid input or infeasible settings.
#[derive(Debug)]
pub enum CliError {
    Io(String),
    Invalid(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 2,
            CliError::Invalid(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) => write!(f, "io error: {m}"),
            CliError::Invalid(m) => write!(f, "invalid input: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<uniton_core::Error> for CliError {
    fn from(e: uniton_core::Error) -> Self {
        match e {
            uniton_core::Error::Io(m) => CliError::Io(m),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Invalid(e.to_string())
    }
}
