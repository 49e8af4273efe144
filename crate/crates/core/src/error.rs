use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown configuration keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),

    #[error("input is not on the unit sphere: |x| = {norm:.17}")]
    NonUnitInput { norm: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("power iteration did not converge after {iterations} iterations (best estimate {estimate})")]
    NoConvergence { iterations: usize, estimate: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("training diverged at step {step}: empirical risk {risk}")]
    Diverged { step: usize, risk: f64 },

    #[error("dataset is not separable by tangent features at initialization (gamma = 0)")]
    NotSeparable,

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("unknown probe `{name}`; available: {}", .catalog.join(", "))]
    UnknownProbe { name: String, catalog: Vec<String> },

    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnknownKeys(_) | Error::UnknownProbe { .. } => 2,
            Error::Io(_) | Error::Json(_) | Error::Checkpoint(_) | Error::MissingArtifact(_) => 2,
            _ => 3,
        }
    }
}
