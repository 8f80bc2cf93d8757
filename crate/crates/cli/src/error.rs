use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed or out-of-range input; `line` and `column` are 1-based.
    #[error("{path}:{line}:{column}: {message}")]
    Input {
        path: PathBuf,
        line: u64,
        column: usize,
        message: String,
    },

    #[error("{0}")]
    Data(String),

    #[error(transparent)]
    Core(#[from] qgad_core::Error),

    #[error("artifact {path}: {message}")]
    Artifact { path: PathBuf, message: String },

    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use qgad_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Io { .. } | CliError::Artifact { .. } => EXIT_USAGE,
            CliError::Input { .. } | CliError::Data(_) => EXIT_DATA,
            CliError::Verification(_) => EXIT_VERIFY,
            CliError::Core(e) => match e {
                E::InvalidArgument(_) | E::Resource { .. } | E::UnsupportedWidth { .. } | E::BoundInvalid { .. } => {
                    EXIT_USAGE
                }
                _ => EXIT_DATA,
            },
        }
    }

    /// Machine-readable form written to standard error for data failures.
    pub fn diagnostic(&self) -> serde_json::Value {
        use serde_json::json;
        match self {
            CliError::Core(qgad_core::Error::SingularCovariance { eigenvalue, direction }) => json!({
                "error": "singular_covariance",
                "eigenvalue": eigenvalue,
                "direction": direction,
                "message": self.to_string(),
            }),
            CliError::Input { line, column, message, .. } => json!({
                "error": "input",
                "line": line,
                "column": column,
                "message": message,
            }),
            _ => json!({ "error": "data", "message": self.to_string() }),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
