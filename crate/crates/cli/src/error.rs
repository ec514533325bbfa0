use std::path::Path;

use pulseforge::latent::LatentError;
use pulseforge::models::ModelError;
use pulseforge::pulsegen::PulseError;
use pulseforge::transport::TransportError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Divergence(String),
    #[error("{0}")]
    Artifact(String),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::Artifact(_) => 5,
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<PulseError> for CliError {
    fn from(e: PulseError) -> Self {
        match e {
            PulseError::Io(_) => CliError::Io(e.to_string()),
            PulseError::Format(_) => CliError::Artifact(e.to_string()),
            PulseError::Divergence { .. } | PulseError::Exhausted { .. } | PulseError::Degenerate(_) => {
                CliError::Divergence(e.to_string())
            }
            PulseError::InvalidSpec(_) | PulseError::InvalidGrid(_) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Divergence { .. } => CliError::Divergence(e.to_string()),
            ModelError::Io(_) => CliError::Io(e.to_string()),
            ModelError::InvalidConfig(_) | ModelError::Insufficient(_) => CliError::Usage(e.to_string()),
            ModelError::Version { .. }
            | ModelError::Corrupt(_)
            | ModelError::ArchMismatch(_)
            | ModelError::KindMismatch(_)
            | ModelError::Shape(_) => CliError::Artifact(e.to_string()),
            ModelError::Diff(_) => CliError::Divergence(e.to_string()),
        }
    }
}

impl From<LatentError> for CliError {
    fn from(e: LatentError) -> Self {
        match e {
            LatentError::Insufficient(_) | LatentError::InvalidArgument(_) => CliError::Usage(e.to_string()),
            LatentError::Transport(t) => t.into(),
            _ => CliError::Divergence(e.to_string()),
        }
    }
}

impl From<TransportError> for CliError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::InvalidArgument(_) | TransportError::OutOfRange(_) | TransportError::UndefinedRatio => {
                CliError::Usage(e.to_string())
            }
            TransportError::Grid(_) => CliError::Artifact(e.to_string()),
            _ => CliError::Divergence(e.to_string()),
        }
    }
}
