use std::fmt;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    /// Bad config file or flag value. Exit code 2.
    Config(String),
    /// File system or network failure. Exit code 3.
    Io(String),
    /// Input data rejected or a verification failed. Exit code 1.
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Data(_) => ExitCode::from(1),
            CliError::Config(_) => ExitCode::from(2),
            CliError::Io(_) => ExitCode::from(3),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Data(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<perfpower_core::ConfigError> for CliError {
    fn from(e: perfpower_core::ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<perfpower_core::eventlog::EventLogError> for CliError {
    fn from(e: perfpower_core::eventlog::EventLogError) -> Self {
        match e {
            perfpower_core::eventlog::EventLogError::Io(_) => CliError::Io(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

pub fn io(context: impl fmt::Display) -> impl FnOnce(std::io::Error) -> CliError {
    move |e| CliError::Io(format!("{context}: {e}"))
}
