//! Learners: flat Q-learning and SARSA(0), MAXQ-0 and MAXQ-Q with ordered
//! exploration, all-states updating, routed rewards and learned
//! pseudo-rewards.

mod config;
mod explore;
mod flat;
mod maxq;

pub use config::{ExplorationConfig, ExplorationKind, LearnerConfig, LearningRate, DEFAULT_STEP_CAP};
pub use explore::{choose_action, ExplorationState};
pub use flat::{flat_q_episode, flat_q_table, flat_q_update, sarsa0_update, FlatLearner};
pub use maxq::{adapt_pseudo_reward, maxq0_episode, maxqq_episode, maxqq_subtask_episode, Episode, MaxqLearner, Variant};

use crate::decomp::DecompError;
use crate::mdp::MdpError;

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("invalid learner configuration: {0}")]
    Config(String),
    #[error("MAXQ-0 needs zero pseudo-rewards; {0} has some")]
    PseudoRewards(String),
    #[error("episode exceeded {steps} primitive steps")]
    StepCap { steps: usize },
    #[error("no candidate actions")]
    NoCandidates,
    #[error("{0} has no parent")]
    NoParent(String),
    #[error(transparent)]
    Decomp(#[from] DecompError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}
