use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid layout: {0}")]
    Layout(String),

    #[error("invalid instance: {0}")]
    Instance(String),

    #[error("action {action} is not available at state {state}")]
    InvalidAction { state: String, action: usize },

    #[error("state space has {size} states, above the bound of {bound}")]
    Capacity { size: u128, bound: u64 },

    #[error("policy evaluation did not converge after {sweeps} sweeps (last gain error {error:e}); the policy is probably multichain")]
    NoConvergence { sweeps: u64, error: f64 },

    #[error("invalid budget: {0}")]
    Budget(String),

    #[error("random number list has {len} entries but {needed} steps were requested")]
    ShortCrn { len: usize, needed: u64 },

    #[error("schema error at `{path}`: {msg}")]
    Schema { path: String, msg: String },

    #[error("trajectory exceeded {0} steps without reaching a stored state")]
    TrajectoryCap(u64),

    #[error("{0}")]
    Other(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
