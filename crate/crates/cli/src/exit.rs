use std::process::ExitCode;

use tera_core::TeraError;

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Failure = 1,
    Config = 2,
    Divergence = 3,
    Violated = 4,
    MissingArtifact = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub status: Status,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn new(status: Status, error: impl Into<anyhow::Error>) -> Self {
        Self {
            status,
            error: error.into(),
        }
    }

    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Self::new(Status::Config, error)
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.status as u8)
    }
}

impl From<TeraError> for CliError {
    fn from(e: TeraError) -> Self {
        let status = match &e {
            TeraError::Shape(_) | TeraError::Scheme(_) | TeraError::InvalidArgument(_) => Status::Config,
            TeraError::Divergence { .. } => Status::Divergence,
            TeraError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Status::MissingArtifact,
            TeraError::Checkpoint(_) | TeraError::Json(_) => Status::Config,
            _ => Status::Failure,
        };
        Self::new(status, e)
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::new(Status::Failure, e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(Status::Failure, e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::new(Status::Failure, e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new(Status::Failure, e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
