use thiserror::Error;

/// Errors raised by the model, solvers and asymptotic tools.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("integral of t^-{beta} u^2 diverges at t = 0 (u(0) = {u0})")]
    DivergentIntegral { beta: f64, u0: f64 },

    #[error("invalid segment [{t0}, {t1}]")]
    InvalidSegment { t0: f64, t1: f64 },

    #[error("profile is not clamped: u(1) = {end_value}")]
    UnclampedProfile { end_value: f64 },

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sample point {0} outside (0, 1]")]
    InvalidSample(f64),

    #[error("transition width must be positive, got {0}")]
    InvalidMu(f64),

    #[error("transition width {mu} too large for minimum gap {min_gap}")]
    MuTooLarge { mu: f64, min_gap: f64 },

    #[error("period must be positive, got {0}")]
    InvalidPeriod(f64),

    #[error("could not bracket the minimizer")]
    BracketFailure,

    #[error("window [{lo}, {hi}] leaves (0, 1)")]
    WindowOutOfDomain { lo: f64, hi: f64 },

    #[error("only {found} slope sign changes in window, need at least {needed}")]
    TooFewOscillations { found: usize, needed: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

impl ModelError {
    /// True for errors caused by invalid inputs rather than solver trouble.
    pub fn is_config(&self) -> bool {
        !matches!(
            self,
            ModelError::BracketFailure | ModelError::TooFewOscillations { .. }
        )
    }
}
