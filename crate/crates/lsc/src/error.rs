use std::fmt;
use std::io;

use lsc_core::harness::HarnessError;
use lsc_core::learner::LearnError;
use lsc_core::topology::TopologyError;

/// Failure of one CLI invocation. Each kind has its own exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    /// The config file is missing or unreadable.
    ConfigPath(String),
    /// The config or an override does not fit the schema or fails validation.
    Schema(String),
    /// A checkpoint is unreadable or was written for a different setup.
    Checkpoint(String),
    Runtime(String),
    Io(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::ConfigPath(_) => 3,
            CliError::Schema(_) => 4,
            CliError::Checkpoint(_) => 5,
            CliError::Runtime(_) => 6,
            CliError::Io(_) => 7,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::ConfigPath(_) => "config_path",
            CliError::Schema(_) => "schema",
            CliError::Checkpoint(_) => "checkpoint",
            CliError::Runtime(_) => "runtime",
            CliError::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m)
            | CliError::ConfigPath(m)
            | CliError::Schema(m)
            | CliError::Checkpoint(m)
            | CliError::Runtime(m)
            | CliError::Io(m) => m,
        }
    }

    /// The one-line, machine-readable form printed on stderr.
    pub fn line(&self) -> String {
        format!("error code={} kind={} msg={:?}", self.code(), self.kind(), self.message())
    }

    pub fn io(path: &std::path::Path, e: io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_) | HarnessError::Env(lsc_core::env::EnvError::Config(_)) => CliError::Schema(e.to_string()),
            HarnessError::Learn(LearnError::Config(_))
            | HarnessError::Learn(LearnError::Topology(TopologyError::InvalidConfig(_))) => CliError::Schema(e.to_string()),
            HarnessError::Checkpoint(_) => CliError::Checkpoint(e.to_string()),
            HarnessError::Observer(m) => CliError::Io(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}
