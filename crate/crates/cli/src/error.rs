use thiserror::Error;

/// CLI failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Numerical(_) => 2,
            Self::Io(_) => 3,
        }
    }
}

impl From<caldiff::Error> for CliError {
    fn from(e: caldiff::Error) -> Self {
        use caldiff::Error as E;
        match e {
            E::InvalidArgument(_) | E::DimensionMismatch { .. } | E::Disconnected | E::Parse { .. } => {
                Self::Usage(e.to_string())
            }
            E::Io(_) => Self::Io(e.to_string()),
            _ => Self::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}
