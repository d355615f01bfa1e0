//! The decomposed value function: storage, readers, the best-path evaluator
//! and an exact dynamic-programming solver for recursively optimal values.

mod eval;
mod solve;
mod store;

pub use eval::{
    child_values, decompose_path, evaluate_max_node, executable_children, greedy_child, greedy_index, q_of, q_tilde, v_of,
    ChildValue, Decomposition, GreedyPolicy, HierarchicalPolicy, MaxNodeEval, TablePolicy,
};
pub use solve::{evaluate_hierarchical_policy, project_store, solve_recursively_optimal, Conflict, Solution};
pub use store::{Entry, Table, ValueStore};

use crate::mdp::MdpError;

#[derive(Debug, thiserror::Error)]
pub enum DecompError {
    #[error("read of `{table}` where its key is undefined (state {state})")]
    ShieldedRead { table: String, state: usize },
    #[error("{node} has no executable child in state {state}")]
    NoExecutableChild { node: String, state: usize },
    #[error("{node} is already terminated in state {state}")]
    NodeTerminated { node: String, state: usize },
    #[error("child of {edge} cannot be bound in state {state}")]
    UnboundChild { edge: String, state: usize },
    #[error("policy has no choice for {node} in state {state}")]
    NoPolicyEntry { node: String, state: usize },
    #[error("policy of {node} never terminates from state {state}")]
    ImproperPolicy { node: String, state: usize },
    #[error("values of {node} did not converge")]
    Diverged { node: String },
    #[error("store i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}
