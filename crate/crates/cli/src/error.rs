use thiserror::Error;

/// Failure classes of the command-line tool, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(gpda_core::Error),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("chains did not converge (Geweke |z| >= 2 or R-hat >= 1.1)")]
    Unconverged,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Unconverged => 3,
        }
    }
}

impl From<gpda_core::Error> for CliError {
    fn from(e: gpda_core::Error) -> Self {
        use gpda_core::Error as E;
        match e {
            E::GridTooSmall { .. }
            | E::InvalidPartition { .. }
            | E::OutOfBounds { .. }
            | E::InvalidParameter(_)
            | E::Unstable { .. } => CliError::Config(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
