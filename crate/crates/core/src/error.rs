use thiserror::Error;

use crate::conic::SolveStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("argument {value} is outside the domain of {function}")]
    Domain { function: &'static str, value: f64 },

    #[error("demanded power {demand:e} W exceeds the attainable ceiling {ceiling:e} W")]
    Range { demand: f64, ceiling: f64 },

    #[error("channel matrix is ill-conditioned (condition number {condition:e})")]
    SingularChannel { condition: f64 },

    #[error("no well-conditioned channel realization after {attempts} attempts")]
    ChannelSampling { attempts: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid linearization point: {0}")]
    InvalidLinearization(String),

    #[error("root bracketing failed: {0}")]
    Bracketing(String),

    #[error("conic solver returned {status:?}")]
    Solver { status: SolveStatus },

    #[error("successive convex approximation did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("slot {slot} has eigenvalue ratio {ratio:e} above the rank-one threshold")]
    RankViolation { slot: usize, ratio: f64 },

    #[error("allocation failed validation: {0}")]
    Validation(String),

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("every grid point failed ({} points); first failure: {}", failures.len(), failures.first().map(|f| f.1.as_str()).unwrap_or("none"))]
    AllGridPointsFailed { failures: Vec<(f64, String)> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(function: &'static str, value: f64) -> Self {
        Error::Domain { function, value }
    }
}
