use std::path::PathBuf;

use laborflow::graph::GraphError;
use laborflow::records::IngestError;
use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    MissingInput(PathBuf),
    Schema(String),
    EmptyCore(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingInput(_) => 3,
            CliError::Schema(_) => 4,
            CliError::EmptyCore(_) => 5,
            CliError::Other(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::MissingInput(_) => "missing_input",
            CliError::Schema(_) => "schema",
            CliError::EmptyCore(_) => "empty_core",
            CliError::Other(_) => "error",
        }
    }

    /// Machine-readable report written to stderr on failure.
    pub fn report(&self, stage: Option<&str>) -> String {
        #[derive(Serialize)]
        struct Report<'a> {
            error: &'a str,
            exit_code: i32,
            stage: Option<&'a str>,
            message: String,
        }
        serde_json::to_string(&Report {
            error: self.kind(),
            exit_code: self.exit_code(),
            stage,
            message: self.to_string(),
        })
        .expect("report serializes")
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Schema(m) | CliError::EmptyCore(m) | CliError::Other(m) => {
                f.write_str(m)
            }
            CliError::MissingInput(p) => write!(f, "input file not found: {}", p.display()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io(io) => CliError::Other(io.to_string()),
            other => CliError::Schema(other.to_string()),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::EmptyCore(_) => CliError::EmptyCore(e.to_string()),
            GraphError::Ingest(inner) => inner.into(),
            other => CliError::Schema(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Schema(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Schema(e.to_string())
    }
}

/// Wraps any other library error as exit code 1.
pub fn other(e: impl std::fmt::Display) -> CliError {
    CliError::Other(e.to_string())
}
