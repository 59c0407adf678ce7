use std::path::PathBuf;

use crate::simulator::EventLog;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("convolution power n = 0 is a Dirac mass and has no pointwise value")]
    UnsupportedPointwise,

    #[error("subcriticality gate failed: Λ·max_i Σ_j A_N(i,j) = {gate:.6} ≥ 1")]
    NotSubcritical { gate: f64 },

    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),

    #[error("horizon too short: {0}")]
    HorizonTooShort(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("event budget of {cap} events exceeded at t = {time:.6}")]
    BudgetExceeded {
        cap: u64,
        time: f64,
        partial: Box<EventLog>,
    },

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("regime III variance requires the limit γ of K/N")]
    MissingGamma,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error comes from the environment (files, streams) rather
    /// than from the model or its inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
