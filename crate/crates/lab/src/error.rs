use mspl_core::ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown preset `{0}` (expected muller, spherical-ok or custom)")]
    UnknownPreset(String),
    #[error("scaling fit needs at least 3 points, got {0}")]
    InsufficientData(usize),
    #[error("scaling fit needs positive values, got ({eps}, {energy})")]
    NonPositiveValue { eps: f64, energy: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl LabError {
    /// Process exit code for the CLI: 2 for bad input, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::UnknownPreset(_) | LabError::Json(_) => 2,
            LabError::Model(e) if e.is_config() => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
