use rand::Rng;

use crate::mdp::{sample_transition, ActionOrder, PolicyMap, TabularModel, TabularQ};

use super::explore::ExplorationState;
use super::maxq::Episode;
use super::{LearnError, LearnerConfig, LearningRate};

/// A Q table with `init` everywhere except at terminal states, which hold 0.
pub fn flat_q_table(model: &TabularModel, init: f64) -> TabularQ {
    let mut q = TabularQ::new(model.num_states(), model.num_actions(), init);
    for s in (0..model.num_states()).filter(|&s| model.is_terminal(s)) {
        for a in 0..model.num_actions() {
            q.set(s, a, 0.0);
        }
    }
    q
}

/// Q-learning: moves `Q(s, a)` toward `r + gamma * max Q(s', .)`.
pub fn flat_q_update(q: &mut TabularQ, s: usize, a: usize, r: f64, next: usize, alpha: f64, gamma: f64) {
    let target = r + gamma * q.max(next);
    q.set(s, a, (1.0 - alpha) * q.get(s, a) + alpha * target);
}

/// SARSA(0): moves `Q(s, a)` toward `r + gamma * Q(s', a')`.
#[allow(clippy::too_many_arguments)]
pub fn sarsa0_update(q: &mut TabularQ, s: usize, a: usize, r: f64, next: usize, next_a: usize, alpha: f64, gamma: f64) {
    let target = r + gamma * q.get(next, next_a);
    q.set(s, a, (1.0 - alpha) * q.get(s, a) + alpha * target);
}

/// Flat Q-learning agent with its exploration schedule.
#[derive(Debug, Clone)]
pub struct FlatLearner {
    pub q: TabularQ,
    cfg: LearnerConfig,
    explore: ExplorationState,
    visits: Vec<u32>,
    order: ActionOrder,
}

impl FlatLearner {
    pub fn new(model: &TabularModel, cfg: &LearnerConfig) -> Result<Self, LearnError> {
        cfg.validate(None)?;
        Ok(Self {
            q: flat_q_table(model, cfg.initial_value),
            cfg: cfg.clone(),
            explore: ExplorationState::flat(&cfg.exploration),
            visits: vec![0; model.num_states() * model.num_actions()],
            order: ActionOrder::identity(model.num_actions()),
        })
    }

    pub fn exploration(&self) -> &ExplorationState {
        &self.explore
    }

    fn rate(&mut self, s: usize, a: usize, na: usize) -> f64 {
        match self.cfg.learning_rate {
            LearningRate::Constant(x) => x,
            LearningRate::InverseVisits => {
                let n = &mut self.visits[s * na + a];
                *n += 1;
                1.0 / *n as f64
            }
        }
    }

    fn choose<R: Rng + ?Sized>(&mut self, s: usize, rng: &mut R) -> Result<usize, LearnError> {
        let items: Vec<(usize, usize, f64)> = (0..self.q.num_actions()).map(|a| (a, self.order.rank(a), self.q.get(s, a))).collect();
        self.explore.select(0, s as u64, &items, rng)
    }

    /// Ordered greedy policy of the current table.
    pub fn greedy_policy(&self) -> PolicyMap {
        crate::mdp::ordered_greedy_policy(&self.q, &self.order)
    }
}

/// Runs one Q-learning episode from a start state drawn from the model.
pub fn flat_q_episode<R: Rng + ?Sized>(learner: &mut FlatLearner, model: &TabularModel, rng: &mut R) -> Result<Episode, LearnError> {
    let mut s = model.sample_start(rng);
    let mut ep = Episode::default();
    let na = model.num_actions();
    while !model.is_terminal(s) {
        if ep.steps >= learner.cfg.step_cap {
            return Err(LearnError::StepCap { steps: ep.steps });
        }
        let a = learner.choose(s, rng)?;
        let (next, r) = sample_transition(model, s, a, rng)?;
        let alpha = learner.rate(s, a, na);
        flat_q_update(&mut learner.q, s, a, r, next, alpha, model.gamma());
        ep.record(s, r);
        s = next;
    }
    learner.explore.on_goal(0);
    ep.visited.reverse();
    Ok(ep)
}
