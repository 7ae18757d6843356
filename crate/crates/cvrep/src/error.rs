use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] cvrep_core::Error),
    #[error("convergence: {0}")]
    Convergence(String),
    #[error("physicality gate: {0}")]
    Physicality(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Core(e) => match e {
                cvrep_core::Error::Quadrature { .. }
                | cvrep_core::Error::Extrapolation { .. }
                | cvrep_core::Error::Optimizer { .. } => 3,
                cvrep_core::Error::Intractable { .. }
                | cvrep_core::Error::LengthMismatch { .. }
                | cvrep_core::Error::Domain { .. } => 2,
                _ => 3,
            },
            RunError::Convergence(_) | RunError::Physicality(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

pub type RunResult<T> = Result<T, RunError>;

pub(crate) fn config_err(msg: impl Into<String>) -> RunError {
    RunError::Config(msg.into())
}
