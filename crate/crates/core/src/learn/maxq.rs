use rand::Rng;
use rustc_hash::FxHashMap;

use crate::decomp::{child_values, greedy_index, ValueStore};
use crate::mdp::{sample_transition, TabularModel};
use crate::taskgraph::{EdgeId, KeyMode, MaxqGraph, NodeId, Params};

use super::explore::{choose_action, ExplorationState};
use super::{LearnError, LearnerConfig, LearningRate};

/// Which update rule the learner follows. MAXQ-0 is MAXQ-Q restricted to
/// graphs without pseudo-rewards, where both completion tables coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Zero,
    Q,
}

/// What one episode did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Episode {
    pub steps: usize,
    pub total_reward: f64,
    /// Environment reward of each primitive step, in order.
    pub rewards: Vec<f64>,
    /// State before each primitive step, most recent first.
    pub visited: Vec<usize>,
}

impl Episode {
    pub(crate) fn record(&mut self, s: usize, r: f64) {
        self.steps += 1;
        self.total_reward += r;
        self.rewards.push(r);
        self.visited.push(s);
    }
}

/// A hierarchical learner: configuration, exploration state and visit counts.
#[derive(Debug, Clone)]
pub struct MaxqLearner {
    cfg: LearnerConfig,
    variant: Variant,
    explore: ExplorationState,
    visits: FxHashMap<(usize, u64), u32>,
    interruption: Option<usize>,
}

impl MaxqLearner {
    pub fn new(graph: &MaxqGraph, cfg: &LearnerConfig, variant: Variant) -> Result<Self, LearnError> {
        cfg.validate(Some(graph))?;
        if variant == Variant::Zero && (graph.has_pseudo_rewards() || cfg.adaptive_pseudo_rate.is_some()) {
            return Err(LearnError::PseudoRewards(graph.node(graph.root()).name.clone()));
        }
        Ok(Self {
            cfg: cfg.clone(),
            variant,
            explore: ExplorationState::for_graph(graph, &cfg.exploration),
            visits: FxHashMap::default(),
            interruption: None,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    pub fn exploration(&self) -> &ExplorationState {
        &self.explore
    }

    /// A fresh store with this learner's initial values.
    pub fn new_store(&self, graph: &MaxqGraph, mode: KeyMode) -> ValueStore {
        let mut store = ValueStore::new(graph, mode).with_initial(self.cfg.initial_value);
        for (n, node) in graph.nodes().iter().enumerate() {
            store.set_initial(n, self.cfg.initial_for(&node.name));
        }
        if self.cfg.adaptive_pseudo_rate.is_some() {
            store = store.with_learned_pseudo();
        }
        store
    }

    /// Returns control to the root after `l` primitive actions; `None` runs
    /// children to termination.
    pub fn set_interruption(&mut self, l: Option<usize>) {
        self.interruption = l.map(|x| x.max(1));
    }

    pub fn interruption(&self) -> Option<usize> {
        self.interruption
    }

    fn rate(&mut self, table: usize, key: u64) -> f64 {
        match self.cfg.learning_rate {
            LearningRate::Constant(a) => a,
            LearningRate::InverseVisits => {
                let n = self.visits.entry((table, key)).or_insert(0);
                *n += 1;
                1.0 / f64::from(*n)
            }
        }
    }
}

/// One MAXQ-0 episode from `start`.
pub fn maxq0_episode<R: Rng + ?Sized>(
    learner: &mut MaxqLearner,
    graph: &MaxqGraph,
    model: &TabularModel,
    store: &mut ValueStore,
    rng: &mut R,
    start: usize,
) -> Result<Episode, LearnError> {
    if learner.variant != Variant::Zero {
        return Err(LearnError::Config("learner was not built for MAXQ-0".into()));
    }
    Run::new(learner, graph, model, store, rng).episode(graph.root(), &Params::new(), start)
}

/// One MAXQ-Q episode from `start`.
pub fn maxqq_episode<R: Rng + ?Sized>(
    learner: &mut MaxqLearner,
    graph: &MaxqGraph,
    model: &TabularModel,
    store: &mut ValueStore,
    rng: &mut R,
    start: usize,
) -> Result<Episode, LearnError> {
    Run::new(learner, graph, model, store, rng).episode(graph.root(), &Params::new(), start)
}

/// One MAXQ-Q invocation of `node` with `params` from `start`, run until the
/// node terminates or the episode ends. Rewards routed to nodes outside the
/// invocation are dropped.
#[allow(clippy::too_many_arguments)]
pub fn maxqq_subtask_episode<R: Rng + ?Sized>(
    learner: &mut MaxqLearner,
    graph: &MaxqGraph,
    model: &TabularModel,
    store: &mut ValueStore,
    rng: &mut R,
    node: NodeId,
    params: &[usize],
    start: usize,
) -> Result<Episode, LearnError> {
    Run::new(learner, graph, model, store, rng).episode(node, &params.iter().copied().collect(), start)
}

/// Moves the learned pseudo-reward of the child of `edge` ending in `s` toward
/// the parent's `max Q~` there (or the parent's own end value if it ended too).
#[allow(clippy::too_many_arguments)]
pub fn adapt_pseudo_reward(
    graph: &MaxqGraph,
    store: &mut ValueStore,
    edge: EdgeId,
    parent_params: &[usize],
    child_params: &[usize],
    s: usize,
    alpha: f64,
) -> Result<(), LearnError> {
    let (parent, child) = (graph.edge(edge).parent, graph.edge(edge).child);
    if graph.node(child).is_primitive() {
        return Err(LearnError::Config(format!("{} is primitive", graph.node(child).name)));
    }
    if child == graph.root() {
        return Err(LearnError::NoParent(graph.node(child).name.clone()));
    }
    let target = if graph.terminated(parent, s, parent_params) {
        store.pseudo_reward(graph, parent, s, parent_params)
    } else {
        let cs = child_values(store, graph, parent, s, parent_params)?;
        cs.iter().map(|c| c.q_tilde).fold(f64::NEG_INFINITY, f64::max)
    };
    store.blend_pseudo_reward(graph, child, s, child_params, alpha, target);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum End {
    Done,
    Interrupted,
    /// The episode ended while the node had not terminated.
    Aborted,
}

struct Frame {
    node: NodeId,
    /// Rewards routed to this frame during its current child, by global step.
    routed: Vec<(usize, f64)>,
}

struct Run<'a, R: ?Sized> {
    learner: &'a mut MaxqLearner,
    graph: &'a MaxqGraph,
    model: &'a TabularModel,
    store: &'a mut ValueStore,
    rng: &'a mut R,
    ep: Episode,
    frames: Vec<Frame>,
    budget: usize,
    interrupted: bool,
}

impl<'a, R: Rng + ?Sized> Run<'a, R> {
    fn new(
        learner: &'a mut MaxqLearner,
        graph: &'a MaxqGraph,
        model: &'a TabularModel,
        store: &'a mut ValueStore,
        rng: &'a mut R,
    ) -> Self {
        Self { learner, graph, model, store, rng, ep: Episode::default(), frames: Vec::new(), budget: 0, interrupted: false }
    }

    fn episode(mut self, node: NodeId, params: &Params, start: usize) -> Result<Episode, LearnError> {
        self.invoke(node, params, start)?;
        self.ep.visited.reverse();
        Ok(self.ep)
    }

    fn invoke(&mut self, node: NodeId, params: &Params, s: usize) -> Result<(usize, End), LearnError> {
        match self.graph.action_of(node) {
            Some(a) => self.primitive(node, a, s).map(|s2| (s2, End::Done)),
            None => {
                self.frames.push(Frame { node, routed: Vec::new() });
                let out = self.composite(node, params, s);
                self.frames.pop();
                out
            }
        }
    }

    fn primitive(&mut self, leaf: NodeId, a: usize, s: usize) -> Result<usize, LearnError> {
        if self.ep.steps >= self.learner.cfg.step_cap {
            return Err(LearnError::StepCap { steps: self.ep.steps });
        }
        let (s2, r) = sample_transition(self.model, s, a, self.rng)?;
        let t = self.ep.steps;
        self.ep.record(s, r);
        let sp = self.graph.space();
        let leaf_r = match self.graph.split() {
            Some(split) => {
                let root = self.graph.root();
                for (target, x) in split.route(sp, s, a, s2, r) {
                    let frame = self.frames.iter().rposition(|f| f.node == target);
                    if let Some(k) = frame.or_else(|| self.frames.first().filter(|f| f.node == root).map(|_| 0)) {
                        self.frames[k].routed.push((t, x));
                    }
                }
                split.leaf_part(sp, s, a, s2, r)
            }
            None => r,
        };
        let key = self.store.leaf_entry_key(self.graph, leaf, s)?;
        let alpha = self.learner.rate(self.graph.edges().len() + leaf, key);
        self.store.blend_leaf_value(self.graph, leaf, s, alpha, leaf_r)?;
        if self.learner.interruption.is_some() {
            self.budget = self.budget.saturating_sub(1);
            if self.budget == 0 {
                self.interrupted = true;
            }
        }
        Ok(s2)
    }

    fn composite(&mut self, node: NodeId, params: &Params, mut s: usize) -> Result<(usize, End), LearnError> {
        let g = self.graph;
        let is_root = node == g.root();
        loop {
            if g.terminated(node, s, params) {
                if g.goal(node, s, params) {
                    self.learner.explore.on_goal(node);
                }
                return Ok((s, End::Done));
            }
            if self.model.is_terminal(s) {
                return Ok((s, End::Aborted));
            }
            let cands = child_values(self.store, g, node, s, params)?;
            let k = choose_action(&mut self.learner.explore, g, self.store, node, s, params, &cands, self.rng)?;
            let (e, cp) = (cands[k].edge, cands[k].params.clone());
            let child = g.edge(e).child;
            if is_root {
                if let Some(l) = self.learner.interruption {
                    self.budget = l;
                    self.interrupted = false;
                }
            }
            let t0 = self.ep.steps;
            let (s2, child_end) = self.invoke(child, &cp, s)?;
            let t1 = self.ep.steps;
            let routed = std::mem::take(&mut self.frames.last_mut().expect("frame").routed);

            if child_end == End::Interrupted {
                s = s2;
                if is_root {
                    continue;
                }
                return Ok((s, End::Interrupted));
            }
            let done = g.terminated(node, s2, params);
            if self.model.is_terminal(s2) && !done {
                return Ok((s2, End::Aborted));
            }
            self.update(node, params, e, &cp, t0, t1, s2, done, &routed)?;
            if let Some(rate) = self.learner.cfg.adaptive_pseudo_rate {
                if child_end == End::Done && !g.node(child).is_primitive() && !g.goal(child, s2, &cp) {
                    adapt_pseudo_reward(g, self.store, e, params, &cp, s2, rate)?;
                }
            }
            s = s2;
            if self.interrupted && !is_root && !done {
                return Ok((s, End::Interrupted));
            }
        }
    }

    /// Completion updates for the child of `e` that ran over steps `t0..t1`.
    #[allow(clippy::too_many_arguments)]
    fn update(
        &mut self,
        node: NodeId,
        params: &Params,
        e: EdgeId,
        cp: &Params,
        t0: usize,
        t1: usize,
        s2: usize,
        done: bool,
        routed: &[(usize, f64)],
    ) -> Result<(), LearnError> {
        let g = self.graph;
        let (cont, cont_t) = if done {
            (0.0, self.store.pseudo_reward(g, node, s2, params))
        } else {
            let cs = child_values(self.store, g, node, s2, params)?;
            let best = &cs[greedy_index(g, &cs)];
            (best.value + self.store.completion(g, best.edge, s2, params)?, best.q_tilde)
        };
        let gamma = self.model.gamma();
        // Discounted routed reward from each step to the end of the child.
        let mut own = vec![0.0; t1 - t0];
        for &(t, x) in routed {
            own[t - t0] += x;
        }
        let mut acc = 0.0;
        for x in own.iter_mut().rev() {
            acc = *x + gamma * acc;
            *x = acc;
        }
        let last = if self.learner.cfg.all_states_updating { t1 } else { t0 + 1 };
        // `visited` is in time order until the episode ends.
        for j in (t0..last).rev() {
            let sj = self.ep.visited[j];
            if j > t0 && (g.terminated(node, sj, params) || g.child_params(e, sj, params).as_ref() != Some(cp)) {
                continue;
            }
            let key = match self.store.completion_key(g, e, sj, params) {
                Ok(Some(k)) => k,
                Ok(None) => continue,
                Err(err) if j == t0 => return Err(err.into()),
                Err(_) => continue,
            };
            let discount = gamma.powi((t1 - j) as i32);
            let alpha = self.learner.rate(e, key);
            let r = own[j - t0];
            self.store.blend_completion(g, e, sj, params, alpha, r + discount * cont, r + discount * cont_t)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::decomp::{solve_recursively_optimal, v_of, Table};
    use crate::envs::{build_taxi, build_two_rooms, TaxiConfig, TwoRoomsConfig, TwoRoomsLayout};
    use crate::learn::{ExplorationConfig, ExplorationKind};
    use crate::mdp::value_iteration;

    fn counter_config() -> LearnerConfig {
        LearnerConfig {
            learning_rate: LearningRate::Constant(1.0),
            initial_value: 0.0,
            exploration: ExplorationConfig { kind: ExplorationKind::Counter, threshold: 5, ..Default::default() },
            ..Default::default()
        }
    }

    fn train(
        learner: &mut MaxqLearner,
        graph: &MaxqGraph,
        model: &TabularModel,
        store: &mut ValueStore,
        episodes: usize,
        seed: u64,
    ) -> Vec<Episode> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..episodes)
            .map(|_| {
                let s0 = model.sample_start(&mut rng);
                maxqq_episode(learner, graph, model, store, &mut rng, s0).unwrap()
            })
            .collect()
    }

    fn left_states(m: &TabularModel) -> Vec<usize> {
        m.start().iter().map(|&(s, _)| s).collect()
    }

    #[test]
    fn zero_pseudo_reward_keeps_both_tables_equal() {
        let (m, g) = build_taxi(&TaxiConfig { fickle: true, ..Default::default() }).unwrap();
        assert!(!g.has_pseudo_rewards());
        let cfg = LearnerConfig { learning_rate: LearningRate::Constant(0.25), ..Default::default() };
        let mut learner = MaxqLearner::new(&g, &cfg, Variant::Q).unwrap();
        let mut store = learner.new_store(&g, KeyMode::Abstract);
        train(&mut learner, &g, &m, &mut store, 200, 3);
        let entries = store.entries(&g);
        let plain: Vec<_> = entries.iter().filter(|x| x.table == Table::Completion).collect();
        let tilde: Vec<_> = entries.iter().filter(|x| x.table == Table::PseudoCompletion).collect();
        assert!(!plain.is_empty());
        assert_eq!(plain.len(), tilde.len());
        for (a, b) in plain.iter().zip(&tilde) {
            assert_eq!((&a.name, a.key), (&b.name, b.key));
            assert_eq!(a.value.to_bits(), b.value.to_bits());
        }
    }

    #[test]
    fn maxq0_reaches_the_recursive_optimum_on_two_rooms() {
        let (m, g) = build_two_rooms(&TwoRoomsConfig::default()).unwrap();
        let oracle = solve_recursively_optimal(&g, &m, 1e-12).unwrap();
        let mut learner = MaxqLearner::new(&g, &counter_config(), Variant::Zero).unwrap();
        let mut store = learner.new_store(&g, KeyMode::Full);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..600 {
            let s0 = m.sample_start(&mut rng);
            maxq0_episode(&mut learner, &g, &m, &mut store, &mut rng, s0).unwrap();
        }
        let root = g.root();
        for s in left_states(&m) {
            let want = v_of(&oracle.store, &g, root, s, &[]).unwrap();
            let got = v_of(&store, &g, root, s, &[]).unwrap();
            assert!((got - want).abs() < 0.05, "state {s}: {got} vs {want}");
        }
    }

    #[test]
    fn maxq0_rejects_pseudo_rewards() {
        let (_, g) =
            build_two_rooms(&TwoRoomsConfig { upper_door_reward: -2.0, lower_door_reward: -6.0, ..Default::default() })
                .unwrap();
        assert!(matches!(MaxqLearner::new(&g, &counter_config(), Variant::Zero), Err(LearnError::PseudoRewards(_))));
        assert!(MaxqLearner::new(&g, &counter_config(), Variant::Q).is_ok());
    }

    #[test]
    fn a_three_step_child_gives_three_parent_updates() {
        let (m, g) = build_two_rooms(&TwoRoomsConfig::default()).unwrap();
        let lay = TwoRoomsLayout::default();
        let start = lay.cell([0, 0]).unwrap();
        let q_exit = g.edge_id("QExit").unwrap();
        for (all, want) in [(true, 3), (false, 1)] {
            let mut cfg = counter_config();
            cfg.learning_rate = LearningRate::InverseVisits;
            cfg.all_states_updating = all;
            let mut learner = MaxqLearner::new(&g, &cfg, Variant::Q).unwrap();
            let mut store = learner.new_store(&g, KeyMode::Full);
            train(&mut learner, &g, &m, &mut store, 400, 5);
            // Greedy from here on: east three times to the upper door.
            learner.cfg.exploration = ExplorationConfig { kind: ExplorationKind::EpsilonGreedy, epsilon: 0.0, ..Default::default() };
            learner.explore = ExplorationState::for_graph(&g, &learner.cfg.exploration);
            let count = |l: &MaxqLearner| l.visits.iter().filter(|((t, _), _)| *t == q_exit).map(|(_, n)| *n).sum::<u32>();
            let before = count(&learner);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let ep = maxqq_episode(&mut learner, &g, &m, &mut store, &mut rng, start).unwrap();
            assert_eq!(ep.steps, 5);
            assert_eq!(count(&learner) - before, want, "all-states updating {all}");
        }
    }

    #[test]
    fn pseudo_rewards_shape_the_exit_without_touching_c() {
        let (m, g) = build_two_rooms(&TwoRoomsConfig { upper_door_reward: -2.0, lower_door_reward: -6.0, ..Default::default() })
            .unwrap();
        let vstar = value_iteration(&m, 1e-12).unwrap();
        let oracle = solve_recursively_optimal(&g, &m, 1e-12).unwrap();
        // Every action keeps being tried, so off-policy entries stay fresh.
        let mut cfg = counter_config();
        cfg.exploration = ExplorationConfig { kind: ExplorationKind::EpsilonGreedy, epsilon: 0.3, ..Default::default() };
        let mut learner = MaxqLearner::new(&g, &cfg, Variant::Q).unwrap();
        let mut store = learner.new_store(&g, KeyMode::Full);
        train(&mut learner, &g, &m, &mut store, 2000, 2);
        let root = g.root();
        for s in left_states(&m) {
            let got = v_of(&store, &g, root, s, &[]).unwrap();
            assert!((got - vstar.get(s)).abs() < 0.05, "state {s}: {got} vs {}", vstar.get(s));
            for e in g.node(g.node_id("Exit").unwrap()).children().to_vec() {
                if g.executable(e, s, &[]).is_none() {
                    continue;
                }
                let (c, c_t) = (store.completion(&g, e, s, &[]).unwrap(), store.pseudo_completion(&g, e, s, &[]).unwrap());
                let (oc, oc_t) =
                    (oracle.store.completion(&g, e, s, &[]).unwrap(), oracle.store.pseudo_completion(&g, e, s, &[]).unwrap());
                assert!((c - oc).abs() < 0.05 && (c_t - oc_t).abs() < 0.05, "edge {e} state {s}: {c} {oc} {c_t} {oc_t}");
            }
        }
    }

    #[test]
    fn adaptive_pseudo_rewards_prefer_the_closer_door() {
        let (m, g) = build_two_rooms(&TwoRoomsConfig::default()).unwrap();
        let mut cfg = counter_config();
        cfg.adaptive_pseudo_rate = Some(0.2);
        let mut learner = MaxqLearner::new(&g, &cfg, Variant::Q).unwrap();
        let mut store = learner.new_store(&g, KeyMode::Full);
        train(&mut learner, &g, &m, &mut store, 600, 4);
        let lay = TwoRoomsLayout::default();
        let exit = g.node_id("Exit").unwrap();
        let up = store.pseudo_reward(&g, exit, lay.upper_door, &[]);
        let low = store.pseudo_reward(&g, exit, lay.lower_door, &[]);
        assert!(up > low, "{up} vs {low}");
        assert!((up + 2.0).abs() < 0.05 && (low + 6.0).abs() < 0.05, "{up} {low}");
        let e = g.edge_id("QExit").unwrap();
        assert!(adapt_pseudo_reward(&g, &mut store, e, &[], &[], lay.upper_door, 0.5).is_ok());
        let north = g.edge_id("QExitNorth").unwrap();
        assert!(adapt_pseudo_reward(&g, &mut store, north, &[], &[], lay.upper_door, 0.5).is_err());
    }

    #[test]
    fn seeded_runs_repeat() {
        let (m, g) = build_taxi(&TaxiConfig { fickle: true, ..Default::default() }).unwrap();
        let run = || {
            let mut learner = MaxqLearner::new(&g, &LearnerConfig::default(), Variant::Q).unwrap();
            let mut store = learner.new_store(&g, KeyMode::Abstract);
            let eps = train(&mut learner, &g, &m, &mut store, 30, 9);
            (eps, store)
        };
        let (a, b) = (run(), run());
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn interruption_returns_to_the_root() {
        let (m, g) = build_taxi(&TaxiConfig::default()).unwrap();
        let mut learner = MaxqLearner::new(&g, &LearnerConfig::default(), Variant::Q).unwrap();
        learner.set_interruption(Some(1));
        let mut store = learner.new_store(&g, KeyMode::Abstract);
        let eps = train(&mut learner, &g, &m, &mut store, 20, 11);
        assert!(eps.iter().all(|e| e.visited.len() == e.steps && e.rewards.len() == e.steps));
    }

    #[test]
    fn step_cap_is_an_error() {
        let (m, g) = build_taxi(&TaxiConfig::default()).unwrap();
        let cfg = LearnerConfig { step_cap: 3, ..Default::default() };
        let mut learner = MaxqLearner::new(&g, &cfg, Variant::Q).unwrap();
        let mut store = learner.new_store(&g, KeyMode::Abstract);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s0 = m.sample_start(&mut rng);
        let out = maxqq_episode(&mut learner, &g, &m, &mut store, &mut rng, s0);
        assert!(matches!(out, Err(LearnError::StepCap { steps: 3 })));
    }
}
