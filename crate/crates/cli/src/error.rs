use std::path::Path;

use dmdnet::adr::AdrError;
use dmdnet::nn::NnError;
use dmdnet::trainer::TrainError;
use thiserror::Error;

/// Top-level failure, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<AdrError> for CliError {
    fn from(e: AdrError) -> Self {
        match e {
            AdrError::Params(_) | AdrError::Grid(_) => CliError::Usage(e.to_string()),
            AdrError::Io(_) | AdrError::Json(_) | AdrError::Dataset(_) => CliError::Data(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => CliError::Usage(e.to_string()),
            TrainError::Data(_) | TrainError::Io(_) => CliError::Data(e.to_string()),
            TrainError::Nn(NnError::Io(_) | NnError::Json(_) | NnError::Version(_) | NnError::Shape { .. }) => CliError::Data(e.to_string()),
            TrainError::Nn(NnError::InvalidSpec(_)) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        TrainError::Nn(e).into()
    }
}
