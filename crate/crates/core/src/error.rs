//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid domain spec: {0}")]
    InvalidDomain(String),

    #[error("input {0} outside [0, 1]")]
    Domain(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("infeasible budget: {0}")]
    InfeasibleBudget(String),

    #[error("degenerate randomizer geometry: middle-segment mass {0} is not positive")]
    DegenerateGeometry(f64),

    #[error("report batch error: {0}")]
    Batch(String),

    #[error("singular aggregator: q_flip = 1/2 carries no signal")]
    SingularAggregator,

    #[error("degenerate attack target: true distribution already equals the ideal")]
    DegenerateTarget,

    #[error("metric error: {0}")]
    Metric(String),

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
