use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::learn::{ExplorationConfig, LearnerConfig, LearningRate};

use super::HarnessError;

/// The four compared learners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    FlatQ,
    /// MAXQ-Q over full states.
    Maxq,
    /// MAXQ-Q with the graph's state abstractions.
    MaxqAbstract,
    /// As `MaxqAbstract`, trained with interrupted (greedy) execution.
    MaxqGreedy,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::FlatQ, Method::Maxq, Method::MaxqAbstract, Method::MaxqGreedy];

    pub fn label(self) -> &'static str {
        match self {
            Method::FlatQ => "flat-q",
            Method::Maxq => "maxq",
            Method::MaxqAbstract => "maxq-abstract",
            Method::MaxqGreedy => "maxq-greedy",
        }
    }
}

/// Interruption budget during greedy training: `start` primitives in the
/// first episode, `decrement` fewer each episode after, never below 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterruptSchedule {
    pub start: usize,
    pub decrement: usize,
}

impl Default for InterruptSchedule {
    fn default() -> Self {
        Self { start: 500, decrement: 10 }
    }
}

impl InterruptSchedule {
    pub fn budget(&self, episode: usize) -> usize {
        self.start.saturating_sub(self.decrement.saturating_mul(episode)).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Reports {
    pub curves: bool,
    pub accounting: bool,
    /// Also write a gnuplot script for the averaged curve.
    pub plot_script: bool,
    /// Window of the smoothed column in the averaged curve.
    pub moving_average: usize,
}

impl Default for Reports {
    fn default() -> Self {
        Self { curves: true, accounting: true, plot_script: false, moving_average: 100 }
    }
}

/// One experiment: a learner on an environment over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: String,
    /// Environment config overrides, same schema as the environment's config.
    pub env_overrides: toml::Table,
    pub method: Method,
    pub learner: LearnerConfig,
    /// Episodes per seed.
    pub episodes: usize,
    /// Stops a seed once this many primitive steps have been taken.
    pub step_budget: Option<usize>,
    pub seeds: Vec<u64>,
    pub interrupt: InterruptSchedule,
    /// Evaluate the greedy policy every this many episodes.
    pub eval_every: Option<usize>,
    /// Rollouts per start state at each evaluation.
    pub eval_rollouts: usize,
    pub eval_step_cap: usize,
    pub out: Option<PathBuf>,
    pub reports: Reports,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            env: "taxi".into(),
            env_overrides: toml::Table::new(),
            method: Method::MaxqAbstract,
            learner: LearnerConfig::default(),
            episodes: 1000,
            step_budget: None,
            seeds: (0..10).collect(),
            interrupt: InterruptSchedule::default(),
            eval_every: None,
            eval_rollouts: 1,
            eval_step_cap: 1000,
            out: None,
            reports: Reports::default(),
        }
    }
}

fn coolings(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|&(n, c)| (n.to_string(), c)).collect()
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Published learner settings for `method` on `env`. Taxi variants share
    /// the taxi settings; two-rooms gets the taxi ones without per-node rates.
    pub fn preset(env: &str, method: Method) -> Self {
        let hdg = env == "hdg";
        let base_explore = ExplorationConfig { temperature: 50.0, ..Default::default() };
        let (rate, init, cooling, nodes) = match (hdg, method) {
            (false, Method::FlatQ) => (0.25, 0.123, 0.9879, vec![]),
            (false, Method::Maxq) => {
                (0.5, 0.123, 0.9879, vec![("Root", 0.9996), ("Put", 0.9996), ("Get", 0.9939), ("Navigate", 0.9879)])
            }
            (false, _) => (0.25, 0.123, 0.9879, vec![("Root", 0.9074), ("Put", 0.9526), ("Get", 0.9526), ("Navigate", 0.9879)]),
            (true, Method::FlatQ) => (1.0, 0.123, 0.9074, vec![]),
            (true, Method::Maxq) => (
                1.0,
                -25.123,
                0.9074,
                vec![("Root", 0.9074), ("GotoGoalLmk", 0.9999), ("GotoGoal", 0.9074), ("GotoLmk", 0.9526)],
            ),
            (true, _) => (
                1.0,
                -20.123,
                0.9074,
                vec![("Root", 0.9760), ("GotoGoal", 0.9969), ("GotoGoalLmk", 0.9984), ("GotoLmk", 0.9969)],
            ),
        };
        let nodes = if env.starts_with("taxi") || hdg { coolings(&nodes) } else { BTreeMap::new() };
        let learner = LearnerConfig {
            learning_rate: LearningRate::Constant(rate),
            initial_value: init,
            exploration: ExplorationConfig { cooling, node_cooling: nodes, ..base_explore },
            ..Default::default()
        };
        let interrupt = if hdg { InterruptSchedule { start: 3000, decrement: 2 } } else { InterruptSchedule::default() };
        Self {
            name: format!("{env}-{}", method.label()),
            env: env.into(),
            method,
            learner,
            interrupt,
            ..Default::default()
        }
    }

    /// One config per method, sharing seeds, budgets and outputs with `self`.
    pub fn comparison(&self) -> Vec<Self> {
        Method::ALL
            .iter()
            .map(|&m| {
                let p = Self::preset(&self.env, m);
                Self {
                    name: format!("{}-{}", self.name, m.label()),
                    method: m,
                    learner: p.learner,
                    interrupt: p.interrupt,
                    ..self.clone()
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.episodes == 0 {
            return bad("episodes must be positive");
        }
        if self.step_budget == Some(0) {
            return bad("step_budget must be positive");
        }
        if self.eval_every == Some(0) || self.eval_rollouts == 0 || self.eval_step_cap == 0 {
            return bad("evaluation settings must be positive");
        }
        if self.reports.moving_average == 0 {
            return bad("moving_average window must be positive");
        }
        if self.interrupt.start == 0 {
            return bad("interrupt.start must be positive");
        }
        self.learner.validate(None)?;
        Ok(())
    }
}
