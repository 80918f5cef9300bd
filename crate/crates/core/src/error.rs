use crate::state::VehicleState;

/// Errors produced by the simulator, estimator, and harness.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    /// A value entering the dynamics was NaN or infinite.
    #[error("non-finite value in `{field}`")]
    NonFinite { field: &'static str },

    /// Adaptive step size collapsed; carries the last accepted state.
    #[error("integration failed at t = {t:.6} s: {reason}")]
    IntegrationFailure {
        t: f64,
        reason: String,
        last_state: Box<VehicleState>,
    },

    /// Vehicle, sensor, or scenario parameters violate an invariant.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Matrix square root of a covariance failed.
    #[error("covariance square root failed (min diagonal {min_diagonal:e})")]
    SquareRoot { min_diagonal: f64 },

    /// Filter propagation produced a non-finite belief.
    #[error("estimator diverged at t = {t:.6} s")]
    Divergence { t: f64 },

    /// A metric was requested over an empty sample window.
    #[error("empty evaluation window: {0}")]
    EmptyWindow(String),

    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
