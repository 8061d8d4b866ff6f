use thiserror::Error;

/// Failures of a command, each with its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Config(String),
    #[error("certificate failure: {0}")]
    Certificate(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("simulation diverged: {0}")]
    NonFinite(String),
    #[error("chain never accepted a proposal")]
    ZeroAcceptance,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Library(stable_ssm::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Certificate(_) => 3,
            CliError::CheckFailed(_) => 4,
            CliError::NonFinite(_) => 5,
            CliError::ZeroAcceptance => 6,
            CliError::Io(_) | CliError::Library(_) => 1,
        }
    }
}

impl From<stable_ssm::Error> for CliError {
    fn from(e: stable_ssm::Error) -> Self {
        use stable_ssm::Error as E;
        match e {
            E::NonFiniteState(_) | E::NonFiniteMoments => CliError::NonFinite(e.to_string()),
            E::InvalidConfig(_) | E::DimensionMismatch(_) | E::DegreesTooSmall { .. } | E::UnsupportedFamily(_) => CliError::Config(e.to_string()),
            other => CliError::Library(other),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
