use thiserror::Error;

/// Errors raised by scenario loading, rate evaluation and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// The outer loop found an infeasible subproblem after the first
    /// iteration. The previous iterate should always remain feasible, so
    /// this points at a tolerance problem rather than a modelling outcome.
    #[error("subproblem became infeasible at outer iteration {iteration} (phase-I min slack {min_slack:e})")]
    LostFeasibility { iteration: usize, min_slack: f64 },

    #[error("certification failed for user {user}: rate margin {margin:e} below tolerance")]
    Certification { user: usize, margin: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
