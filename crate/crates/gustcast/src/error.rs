use std::path::{Path, PathBuf};

use serde::Serialize;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] gustcast_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },

    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },

    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn csv(path: &Path, source: csv::Error) -> Self {
        CliError::Csv { path: path.to_path_buf(), source }
    }

    pub fn json(path: &Path, source: serde_json::Error) -> Self {
        CliError::Json { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, detail: impl Into<String>) -> Self {
        CliError::Format { path: path.to_path_buf(), detail: detail.into() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(gustcast_core::Error::Shape { .. }) => "shape",
            CliError::Core(gustcast_core::Error::Parameter { .. }) => "parameter",
            CliError::Core(gustcast_core::Error::NonFinite(_)) => "non_finite",
            CliError::Core(gustcast_core::Error::Graph(_)) => "autodiff",
            CliError::Core(gustcast_core::Error::InsufficientData(_)) => "insufficient_data",
            CliError::Core(gustcast_core::Error::Undefined(_)) => "undefined",
            CliError::Core(gustcast_core::Error::Config(_)) => "config",
            CliError::Io { .. } => "io",
            CliError::Csv { .. } => "csv",
            CliError::Json { .. } => "json",
            CliError::Format { .. } => "format",
            CliError::Usage(_) => "usage",
        }
    }

    /// Exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(gustcast_core::Error::Config(_)) => 2,
            CliError::Io { .. } | CliError::Csv { .. } | CliError::Json { .. } | CliError::Format { .. } => 3,
            CliError::Core(_) => 4,
        }
    }

    /// One-line JSON object written to stderr on failure.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Report<'a> {
            error: &'a str,
            message: String,
            exit_code: i32,
        }
        serde_json::to_string(&Report { error: self.kind(), message: self.to_string(), exit_code: self.exit_code() })
            .expect("plain strings serialize")
    }
}
