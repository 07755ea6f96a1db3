use std::path::PathBuf;

use fdmimo_core::sim::SimError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid arguments: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed input {path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error("{failed} of {total} campaign cells failed")]
    PartialFailure { failed: usize, total: usize },
}

#[derive(Serialize)]
struct Report<'a> {
    error: Body<'a>,
}

#[derive(Serialize)]
struct Body<'a> {
    kind: &'a str,
    message: String,
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Input { .. } => "input",
            CliError::Simulation(_) => "simulation",
            CliError::PartialFailure { .. } => "partial_failure",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::PartialFailure { .. } => 3,
            _ => 1,
        }
    }

    /// One-line JSON object `{"error":{"kind":…,"message":…}}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&Report {
            error: Body {
                kind: self.kind(),
                message: self.to_string(),
            },
        })
        .expect("plain strings serialize")
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(m) => CliError::Config(m),
            other => CliError::Simulation(other.to_string()),
        }
    }
}
