use std::path::PathBuf;

use gossip_sa::analysis::AnalysisError;
use gossip_sa::engine::EngineError;
use gossip_sa::gossip::GossipError;
use gossip_sa::problems::ProblemError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("tolerance check failed: {0}")]
    Tolerance(String),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl CliError {
    /// 0 pass, 1 config/validation error, 2 divergence, 3 tolerance failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Validation(_) | CliError::Output { .. } => 1,
            CliError::Divergence(_) => 2,
            CliError::Tolerance(_) => 3,
        }
    }
}

impl From<GossipError> for CliError {
    fn from(e: GossipError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ProblemError> for CliError {
    fn from(e: ProblemError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        if e.is_divergence() {
            CliError::Divergence(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Engine(e) => e.into(),
            AnalysisError::Precondition(_) => CliError::Validation(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}
