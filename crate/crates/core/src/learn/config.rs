use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::taskgraph::MaxqGraph;

use super::LearnError;

/// Primitive steps after which an episode is abandoned.
pub const DEFAULT_STEP_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearningRate {
    Constant(f64),
    /// `1 / n` on the n-th update of an entry.
    InverseVisits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExplorationKind {
    Boltzmann,
    EpsilonGreedy,
    /// Least-tried candidate until each has been tried `threshold` times, then greedy.
    Counter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationConfig {
    pub kind: ExplorationKind,
    pub temperature: f64,
    /// Multiplier applied when a node terminates in a goal state.
    pub cooling: f64,
    /// Per-node cooling overrides, by node name.
    pub node_cooling: BTreeMap<String, f64>,
    pub floor: f64,
    pub epsilon: f64,
    pub epsilon_decay: f64,
    pub threshold: u32,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            kind: ExplorationKind::Boltzmann,
            temperature: 50.0,
            cooling: 0.9879,
            node_cooling: BTreeMap::new(),
            floor: 0.1,
            epsilon: 0.1,
            epsilon_decay: 1.0,
            threshold: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub learning_rate: LearningRate,
    /// Initial value of every table entry.
    pub initial_value: f64,
    /// Per-node overrides (completion tables of a composite, or a leaf's table).
    pub node_initial: BTreeMap<String, f64>,
    pub exploration: ExplorationConfig,
    pub all_states_updating: bool,
    /// Rate of the learned pseudo-reward update; off when absent.
    pub adaptive_pseudo_rate: Option<f64>,
    pub step_cap: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            learning_rate: LearningRate::Constant(0.25),
            initial_value: 0.123,
            node_initial: BTreeMap::new(),
            exploration: ExplorationConfig::default(),
            all_states_updating: true,
            adaptive_pseudo_rate: None,
            step_cap: DEFAULT_STEP_CAP,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self, graph: Option<&MaxqGraph>) -> Result<(), LearnError> {
        let bad = |m: String| Err(LearnError::Config(m));
        if let LearningRate::Constant(a) = self.learning_rate {
            if !(a > 0.0 && a <= 1.0) {
                return bad(format!("learning rate {a} outside (0, 1]"));
            }
        }
        let x = &self.exploration;
        if !(x.temperature > 0.0) || !(x.floor >= 0.0) {
            return bad("temperature must be positive and the floor non-negative".into());
        }
        let coolings = std::iter::once(&x.cooling).chain(x.node_cooling.values());
        if coolings.clone().any(|c| !(*c > 0.0 && *c <= 1.0)) || !(x.epsilon_decay > 0.0 && x.epsilon_decay <= 1.0) {
            return bad("cooling and decay rates must lie in (0, 1]".into());
        }
        if !(0.0..=1.0).contains(&x.epsilon) {
            return bad(format!("epsilon {} outside [0, 1]", x.epsilon));
        }
        if let Some(r) = self.adaptive_pseudo_rate {
            if !(r > 0.0 && r <= 1.0) {
                return bad(format!("pseudo-reward rate {r} outside (0, 1]"));
            }
        }
        if self.step_cap == 0 {
            return bad("step cap must be positive".into());
        }
        if let Some(g) = graph {
            let names = self.node_initial.keys().chain(x.node_cooling.keys());
            if let Some(n) = names.into_iter().find(|n| g.node_id(n).is_none()) {
                return bad(format!("unknown node `{n}`"));
            }
        }
        Ok(())
    }

    pub fn initial_for(&self, name: &str) -> f64 {
        self.node_initial.get(name).copied().unwrap_or(self.initial_value)
    }
}
