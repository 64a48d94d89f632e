use std::fmt;

use thiserror::Error;

/// One problem found in a configuration, tied to the key that caused it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub key: String,
    pub message: String,
}

impl ConfigIssue {
    pub fn new(key: &str, message: impl Into<String>) -> Self {
        Self { key: key.to_string(), message: message.into() }
    }
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

fn join(issues: &[ConfigIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {}", join(.0))]
    Config(Vec<ConfigIssue>),
    #[error("{failed} of {total} trials diverged at {point}: {detail}")]
    Diverged { failed: usize, total: usize, point: String, detail: String },
    #[error(transparent)]
    Core(#[from] sapit_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Diverged { .. } => 3,
            Self::Core(sapit_core::Error::Divergence(_)) => 3,
            Self::Core(_) | Self::Io(_) => 1,
        }
    }
}
