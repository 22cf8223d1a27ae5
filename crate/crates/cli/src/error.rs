use std::path::PathBuf;

use equilibria_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot parse config: {0}")]
    ConfigParse(String),
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("i/o failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("computation failed: {0}")]
    Compute(#[source] CoreError),
    #[error("bad sweep value {value}: {reason}")]
    BadSweepValue { value: f64, reason: String },
    #[error("oracle check failed: {0}")]
    OracleMismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigParse(_) => 10,
            CliError::Validation(_) => 11,
            CliError::Io { .. } => 12,
            CliError::Compute(_) => 13,
            CliError::BadSweepValue { .. } => 14,
            CliError::OracleMismatch(_) => 15,
        }
    }

    pub fn validation(err: CoreError) -> Self {
        CliError::Validation(err.to_string())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
