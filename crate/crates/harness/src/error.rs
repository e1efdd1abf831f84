use std::path::PathBuf;

use thiserror::Error;

use mata_core::CoreError;
use mata_tensor::TensorError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("reward inference is enabled but no demonstration file was given")]
    MissingDemos,

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Short machine-readable category for error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::MissingDemos => "missing_demos",
            Self::Read { .. } | Self::Io(_) => "io",
            Self::Core(CoreError::Config(_)) => "config",
            Self::Core(_) => "core",
            Self::Tensor(_) => "tensor",
            Self::Json(_) => "json",
            Self::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
