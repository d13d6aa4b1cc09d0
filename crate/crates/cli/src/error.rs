use std::path::PathBuf;

use quicksync::analysis::AnalysisError;
use quicksync::simnet::{SimConfigError, SimError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    SimConfig(#[from] SimConfigError),
    #[error(transparent)]
    Sim(SimError),
    #[error(transparent)]
    Analysis(AnalysisError),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => CliError::SimConfig(c),
            SimError::Analysis(a) => CliError::Analysis(a),
            other => CliError::Sim(other),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Analysis(e)
    }
}

impl CliError {
    /// 2 for anything the user can fix in the inputs, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::ReadConfig { .. } | CliError::Config(_) | CliError::SimConfig(_) => 2,
            CliError::Analysis(AnalysisError::Unresolved { .. }) => 1,
            CliError::Analysis(_) => 2,
            CliError::Sim(_) | CliError::Write { .. } => 1,
        }
    }
}
