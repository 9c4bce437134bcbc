use std::path::PathBuf;

use thiserror::Error;

/// Failure of a CLI command. The variant decides the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    ConfigIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    ConfigJson {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("manifest {path}, row {row}: {detail}")]
    Manifest { path: PathBuf, row: usize, detail: String },
    #[error("checkpoint {path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },
    #[error("invalid input: {0}")]
    Input(#[source] deepmetric_core::Error),
    #[error("runtime failure: {0}")]
    Runtime(#[source] deepmetric_core::Error),
    #[error("writing {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for config or validation problems, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Runtime(_) | Self::Output { .. } => 3,
            _ => 2,
        }
    }
}

/// Core errors raised while preparing inputs are validation failures;
/// numeric failures during a run are runtime failures.
impl From<deepmetric_core::Error> for CliError {
    fn from(e: deepmetric_core::Error) -> Self {
        use deepmetric_core::Error as E;
        match e {
            E::NonFinite(_) | E::NonFiniteLoss { .. } | E::ShapeMismatch { .. } | E::NotEvaluated(_) | E::NonScalarOutput(_) | E::UnboundInput(_) => {
                Self::Runtime(e)
            }
            other => Self::Input(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
