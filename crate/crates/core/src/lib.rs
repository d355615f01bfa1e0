//! Tabular hierarchical reinforcement learning with the MAXQ value function
//! decomposition.
//!
//! The crate is organised bottom-up:
//!
//! * [`mdp`]: enumerable models and exact solvers.
//! * [`envs`]: taxi (plain, fickle, fuel), two-rooms and landmark navigation.
//! * [`taskgraph`]: task hierarchies, their text format, abstraction checks
//!   and storage accounting.
//! * [`decomp`]: the value store, decomposition readers, the best-path
//!   evaluator and the recursive DP solver.
//! * [`learn`]: flat Q / SARSA(0), MAXQ-0 and MAXQ-Q.
//! * [`exec`]: stack execution, interruptible greedy execution and one-step
//!   improved execution.
//! * [`harness`]: experiment configs, runs, CSV and accounting reports.

pub mod decomp;
pub mod envs;
pub mod exec;
pub mod harness;
pub mod learn;
pub mod mdp;
pub mod taskgraph;
