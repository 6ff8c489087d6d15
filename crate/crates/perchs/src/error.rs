use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] perchs_core::Error),
    #[error("{context}: {source}")]
    Job { context: String, source: perchs_core::Error },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid metric: {0}")]
    Metric(String),
}

impl CliError {
    pub fn config(field: &str, msg: impl std::fmt::Display) -> Self {
        CliError::Config(format!("{field}: {msg}"))
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), source }
    }

    fn core(&self) -> Option<&perchs_core::Error> {
        match self {
            CliError::Core(e) | CliError::Job { source: e, .. } => Some(e),
            _ => None,
        }
    }

    /// 2 for anything caused by the inputs, 3 for solver failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Schema(_) => 2,
            CliError::Metric(_) => 3,
            CliError::Io { .. } => 1,
            _ => {
                if self.core().is_some_and(|e| e.is_solver_failure()) {
                    3
                } else {
                    2
                }
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
