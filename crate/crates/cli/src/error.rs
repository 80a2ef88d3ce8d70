use std::fmt;

/// Failure classes mapped onto the process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Unusable configuration or flags (exit 2).
    Config(String),
    /// A required input artifact is absent or unreadable (exit 3).
    MissingArtifact(String),
    /// The run itself failed: numerics or artifact writing (exit 4).
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact(_) => 3,
            CliError::Run(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::MissingArtifact(msg) => write!(f, "missing artifact: {msg}"),
            CliError::Run(msg) => write!(f, "run failed: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<dfrc_core::error::Error> for CliError {
    fn from(e: dfrc_core::error::Error) -> Self {
        CliError::Run(e.to_string())
    }
}
