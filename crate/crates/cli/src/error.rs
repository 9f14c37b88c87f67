use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] anyclass::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("input {path} changed since the manifest was written (sha256 {expected}, now {actual})")]
    InputChanged { path: PathBuf, expected: String, actual: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Io { .. } => "io-error",
            CliError::Config(_) => "invalid-config",
            CliError::InputChanged { .. } => "input-changed",
            CliError::Json(_) => "json-error",
            CliError::Csv(_) => "csv-error",
        }
    }

    /// Process exit status. 2 is left to argument parsing errors.
    pub fn exit_code(&self) -> i32 {
        match self.code() {
            "invalid-config" => 3,
            "invalid-input" | "parse-error" | "csv-error" | "json-error" => 4,
            "io-error" => 5,
            "non-finite-loss" => 6,
            "zero-count" | "undefined-metric" => 7,
            "input-changed" => 8,
            _ => 1,
        }
    }
}
