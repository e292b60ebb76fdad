use thiserror::Error;

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("overlap violated at time index {time}: {detail}")]
    Overlap { time: usize, detail: String },

    #[error("invalid hazard at time index {time}: {detail}")]
    InvalidHazard { time: usize, detail: String },

    #[error("invalid probability {value} for {what}")]
    InvalidProbability { what: &'static str, value: f64 },

    #[error("intercept calibration failed at time index {time}: {detail}")]
    Calibration { time: usize, detail: String },

    #[error("no fitted nuisance model is available for round {round}")]
    NotReady { round: u64 },

    #[error("round {got} is out of order (expected {expected})")]
    OutOfOrder { expected: u64, got: u64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by a malformed or inconsistent experiment configuration.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
