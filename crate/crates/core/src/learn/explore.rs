use rand::Rng;
use rustc_hash::FxHashMap;

use crate::decomp::{ChildValue, ValueStore};
use crate::mdp::TIE_TOL;
use crate::taskgraph::{MaxqGraph, NodeId};

use super::{ExplorationConfig, ExplorationKind, LearnError};

/// Per-node exploration schedules and visit counters.
///
/// Slots are graph nodes for hierarchical learners and a single slot for
/// flat ones. Decisions only see a slot's abstract state key and the
/// candidates' values.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationState {
    kind: ExplorationKind,
    temperature: Vec<f64>,
    epsilon: Vec<f64>,
    cooling: Vec<f64>,
    floor: f64,
    epsilon_decay: f64,
    threshold: u32,
    counts: FxHashMap<(usize, u64, usize), u32>,
}

impl ExplorationState {
    fn with_coolings(cfg: &ExplorationConfig, cooling: Vec<f64>) -> Self {
        let n = cooling.len();
        Self {
            kind: cfg.kind,
            temperature: vec![cfg.temperature; n],
            epsilon: vec![cfg.epsilon; n],
            cooling,
            floor: cfg.floor,
            epsilon_decay: cfg.epsilon_decay,
            threshold: cfg.threshold,
            counts: FxHashMap::default(),
        }
    }

    pub fn for_graph(graph: &MaxqGraph, cfg: &ExplorationConfig) -> Self {
        let cooling = graph.nodes().iter().map(|n| cfg.node_cooling.get(&n.name).copied().unwrap_or(cfg.cooling)).collect();
        Self::with_coolings(cfg, cooling)
    }

    pub fn flat(cfg: &ExplorationConfig) -> Self {
        Self::with_coolings(cfg, vec![cfg.cooling])
    }

    /// Effective temperature of a slot (never below the floor).
    pub fn temperature(&self, slot: usize) -> f64 {
        self.temperature[slot].max(self.floor)
    }

    pub fn epsilon(&self, slot: usize) -> f64 {
        self.epsilon[slot]
    }

    /// Cools a slot; called when its task ends in a goal state.
    pub fn on_goal(&mut self, slot: usize) {
        self.temperature[slot] = (self.temperature[slot] * self.cooling[slot]).max(self.floor);
        self.epsilon[slot] *= self.epsilon_decay;
    }

    pub fn visits(&self, slot: usize, key: u64, id: usize) -> u32 {
        self.counts.get(&(slot, key, id)).copied().unwrap_or(0)
    }

    /// Picks one of `candidates`, given as `(id, tie rank, value)`, and returns its position.
    pub fn select<R: Rng + ?Sized>(
        &mut self,
        slot: usize,
        key: u64,
        candidates: &[(usize, usize, f64)],
        rng: &mut R,
    ) -> Result<usize, LearnError> {
        if candidates.is_empty() {
            return Err(LearnError::NoCandidates);
        }
        let greedy = || {
            let best = candidates.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
            (0..candidates.len()).filter(|&k| candidates[k].2 >= best - TIE_TOL).min_by_key(|&k| candidates[k].1).expect("non-empty")
        };
        let k = match self.kind {
            ExplorationKind::Boltzmann => {
                let t = self.temperature(slot);
                let best = candidates.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = candidates.iter().map(|c| ((c.2 - best) / t).exp()).collect();
                let mut u = rng.gen::<f64>() * weights.iter().sum::<f64>();
                let mut pick = candidates.len() - 1;
                for (k, w) in weights.iter().enumerate() {
                    if u < *w {
                        pick = k;
                        break;
                    }
                    u -= w;
                }
                pick
            }
            ExplorationKind::EpsilonGreedy => {
                if rng.gen::<f64>() < self.epsilon[slot] {
                    rng.gen_range(0..candidates.len())
                } else {
                    greedy()
                }
            }
            ExplorationKind::Counter => {
                let least = (0..candidates.len())
                    .map(|k| (self.visits(slot, key, candidates[k].0), candidates[k].1, k))
                    .min()
                    .expect("non-empty");
                if least.0 < self.threshold {
                    least.2
                } else {
                    greedy()
                }
            }
        };
        *self.counts.entry((slot, key, candidates[k].0)).or_insert(0) += 1;
        Ok(k)
    }
}

/// Exploratory choice among the executable children of `node`, scored by `Q~`.
#[allow(clippy::too_many_arguments)]
pub fn choose_action<R: Rng + ?Sized>(
    explore: &mut ExplorationState,
    graph: &MaxqGraph,
    store: &ValueStore,
    node: NodeId,
    s: usize,
    params: &[usize],
    candidates: &[ChildValue],
    rng: &mut R,
) -> Result<usize, LearnError> {
    let items: Vec<(usize, usize, f64)> = candidates.iter().map(|c| (c.edge, graph.edge_rank(c.edge), c.q_tilde)).collect();
    explore.select(node, store.node_key(graph, node, s, params), &items, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(kind: ExplorationKind, temperature: f64) -> ExplorationState {
        ExplorationState::flat(&ExplorationConfig { kind, temperature, ..Default::default() })
    }

    #[test]
    fn cold_boltzmann_is_nearly_greedy() {
        let mut x = state(ExplorationKind::Boltzmann, 1e-6);
        assert_eq!(x.temperature(0), 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = [(0, 0, 1.0), (1, 1, 2.0), (2, 2, 0.5)];
        let hits = (0..10_000).filter(|_| x.select(0, 0, &c, &mut rng).unwrap() == 1).count();
        assert!(hits >= 9_900, "{hits}");
    }

    #[test]
    fn equal_values_are_uniform() {
        let mut x = state(ExplorationKind::Boltzmann, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = [(0, 0, 3.0), (1, 1, 3.0), (2, 2, 3.0), (3, 3, 3.0)];
        let n = 40_000;
        let mut hist = [0usize; 4];
        for _ in 0..n {
            hist[x.select(0, 0, &c, &mut rng).unwrap()] += 1;
        }
        let (p, sd) = (n as f64 / 4.0, (n as f64 * 0.25 * 0.75).sqrt());
        assert!(hist.iter().all(|&h| (h as f64 - p).abs() <= 3.0 * sd), "{hist:?}");
    }

    #[test]
    fn counter_cycles_before_repeating() {
        let mut x = state(ExplorationKind::Counter, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = [(4, 2, 0.0), (5, 0, 9.0), (6, 1, 1.0)];
        let first: Vec<usize> = (0..3).map(|_| x.select(0, 7, &c, &mut rng).unwrap()).collect();
        assert_eq!(first, vec![1, 2, 0]);
        for _ in 0..27 {
            x.select(0, 7, &c, &mut rng).unwrap();
        }
        assert!((0..3).all(|k| x.visits(0, 7, c[k].0) == 10));
        assert_eq!(x.select(0, 7, &c, &mut rng).unwrap(), 1);
    }

    #[test]
    fn cooling_is_monotone_and_floored() {
        let mut x = state(ExplorationKind::Boltzmann, 50.0);
        let mut last = x.temperature(0);
        for _ in 0..2_000 {
            x.on_goal(0);
            assert!(x.temperature(0) <= last);
            last = x.temperature(0);
        }
        assert_eq!(last, 0.1);
        assert!(x.select(0, 0, &[], &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
