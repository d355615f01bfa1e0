//! Enumerable MDPs, sampling, and exact dynamic-programming solvers.

mod model;
mod solve;
mod space;

pub use model::{sample_transition, Outcome, TabularModel};
pub use solve::{
    bellman_residual, one_step_improved_policy, one_step_improved_policy_with, ordered_argmax,
    ordered_greedy_policy, policy_evaluation, policy_residual, q_from_values, value_iteration, ActionOrder,
    PolicyMap, TabularQ, TabularValue, MAX_SWEEPS, TIE_TOL,
};
pub use space::{FactoredState, StateSpace, StateVar};

#[derive(Debug, thiserror::Error)]
pub enum MdpError {
    #[error("invalid state space: {0}")]
    InvalidSpace(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("action index {0} out of range")]
    InvalidAction(usize),
    #[error("attempted to step from terminal state {0}")]
    TerminalStep(usize),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("not a permutation: {0:?}")]
    InvalidOrder(Vec<usize>),
    #[error("policy never terminates from state {0}")]
    ImproperPolicy(usize),
    #[error("no convergence after {sweeps} sweeps")]
    Diverged { sweeps: usize },
}
