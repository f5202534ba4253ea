use std::path::PathBuf;

use serde_json::json;

/// Exit status for configuration and netlist problems.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status for numerical failures.
pub const EXIT_SOLVER: i32 = 3;
/// Exit status of `compare` when the tolerance is exceeded.
pub const EXIT_COMPARE_FAILED: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Netlist {
        path: PathBuf,
        source: specsim_core::Error,
    },

    #[error("{0}")]
    Config(String),

    #[error("{path}: malformed result file: {message}")]
    Result { path: PathBuf, message: String },

    #[error(transparent)]
    Solver(#[from] specsim_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(e) if !e.is_validation() => EXIT_SOLVER,
            _ => EXIT_VALIDATION,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Netlist { .. } => "netlist",
            CliError::Config(_) => "config",
            CliError::Result { .. } => "result",
            CliError::Solver(e) if e.is_validation() => "validation",
            CliError::Solver(_) => "solver",
        }
    }

    /// Machine-readable record printed on stderr.
    pub fn record(&self) -> serde_json::Value {
        let path = match self {
            CliError::Io { path, .. }
            | CliError::Netlist { path, .. }
            | CliError::Result { path, .. } => Some(path.display().to_string()),
            _ => None,
        };
        json!({
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "message": self.to_string(),
                "path": path,
            }
        })
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
