use std::fmt;
use std::process::ExitCode;

/// A command failure, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Rejected configuration, missing or unreadable files: exit 2.
    Config(String),
    /// Failure while computing: exit 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<evoprune::Error> for CliError {
    fn from(e: evoprune::Error) -> Self {
        use evoprune::Error::*;
        match e {
            Shape(_) | InvalidInput(_) => CliError::Runtime(e.to_string()),
            Config(_)
            | BadMagic { .. }
            | BadCheckpointMagic { .. }
            | Truncated { .. }
            | CorruptLength { .. }
            | CountMismatch { .. }
            | VersionMismatch { .. }
            | Io { .. } => CliError::Config(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub(crate) fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}
