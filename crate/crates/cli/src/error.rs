use std::path::PathBuf;

use thiserror::Error;

/// CLI failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or input files. Exit code 2.
    #[error("configuration error: {0}")]
    Config(String),

    /// A computation failed. Exit code 3.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Reading or writing an artifact failed. Exit code 3.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Some campaign stages failed. Exit code 4.
    #[error("campaign incomplete: {failed} stage(s) failed, see {manifest}")]
    Partial { failed: usize, manifest: PathBuf },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io { .. } => 3,
            CliError::Partial { .. } => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<ringsens_core::Error> for CliError {
    fn from(e: ringsens_core::Error) -> Self {
        use ringsens_core::Error as E;
        match e {
            E::InvalidSpec(_)
            | E::InvalidInput(_)
            | E::DimensionMismatch { .. }
            | E::MissingPool
            | E::InsufficientPopulation { .. }
            | E::Json(_) => CliError::Config(e.to_string()),
            E::Eigen(_)
            | E::MatrixExponential(_)
            | E::AcceptanceTooLow { .. }
            | E::SequenceExhausted(_)
            | E::Undefined(_) => CliError::Numerical(e.to_string()),
            E::Io(source) => CliError::Io {
                path: PathBuf::new(),
                source,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
