use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("evaluation failed: {0}")]
    Evaluation(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit status: 1 configuration, 2 evaluator or fit failure, 3 protocol.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Evaluation(_) | CliError::Io(_) => 2,
            CliError::Protocol(_) => 3,
        }
    }
}

impl From<fsibo::optimizer::OptimizerError> for CliError {
    fn from(e: fsibo::optimizer::OptimizerError) -> Self {
        use fsibo::optimizer::OptimizerError as E;
        match e {
            E::InvalidConfig(_) | E::InitOutOfBounds { .. } => CliError::Config(e.to_string()),
            E::EchoMismatch { .. } | E::NoPendingRequest | E::DimensionMismatch { .. } | E::NonFinite(_) => {
                CliError::Protocol(e.to_string())
            }
            _ => CliError::Evaluation(e.to_string()),
        }
    }
}
