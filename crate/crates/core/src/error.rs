use thiserror::Error;

/// Errors produced by model construction, solvers and learners.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MdpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("transition entry P({next}|{state},{action}) = {value} is outside [0, 1]")]
    InvalidProbability {
        state: usize,
        action: usize,
        next: usize,
        value: f64,
    },

    #[error("transition row for (s={state}, a={action}) sums to {sum}, expected 1")]
    RowSum { state: usize, action: usize, sum: f64 },

    #[error("reward r({state},{action}) = {value} is outside [0, 1]")]
    InvalidReward { state: usize, action: usize, value: f64 },

    #[error("policy picks action {action} at state {state}, but only {n_actions} actions exist")]
    InvalidPolicy {
        state: usize,
        action: usize,
        n_actions: usize,
    },

    #[error("invalid discount factor: {0}")]
    InvalidDiscount(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: u64, residual: f64 },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("instance is not weakly communicating: no policy attains the entrywise maximal gain")]
    NotWeaklyCommunicating,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T, E = MdpError> = std::result::Result<T, E>;
