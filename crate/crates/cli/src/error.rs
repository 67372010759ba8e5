use roughflow::error::Error as CoreError;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    /// A numerical check refused the run (step gate, quadrature budget,
    /// fit preconditions).
    #[error("numerical gate failed: {0}")]
    Gate(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration problems, 3 for numerical gates and other
    /// numerical failures, 4 for trajectory blow-up.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Gate(_) => 3,
            CliError::Core(e) if e.is_blow_up() => 4,
            CliError::Core(CoreError::InvalidParameter { .. } | CoreError::DimensionMismatch { .. } | CoreError::Json(_)) => 2,
            CliError::Core(_) => 3,
        }
    }
}
