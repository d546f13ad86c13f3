use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid reference command: {0}")]
    InvalidCommand(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("robot coincides with target at ({x}, {y})")]
    CoincidentTarget { x: f64, y: f64 },

    #[error("numerical abort at step {step} (t = {t}): {what} is not finite")]
    NumericalAbort { step: usize, t: f64, what: &'static str },

    #[error("undefined equilibrium angle: {0}")]
    UndefinedAngle(String),

    #[error("fit window too short: {samples} samples (need at least {required})")]
    WindowTooShort { samples: usize, required: usize },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
