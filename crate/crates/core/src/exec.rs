//! Running policies: the hierarchical stack interpreter, hierarchical-greedy
//! execution with an interruption budget, and one-step improved execution.

use rand::Rng;

use crate::decomp::{evaluate_max_node, v_of, DecompError, GreedyPolicy, HierarchicalPolicy, ValueStore};
use crate::mdp::{one_step_improved_policy, sample_transition, MdpError, PolicyMap, TabularModel, TabularValue};
use crate::taskgraph::{MaxqGraph, NodeId, Params};

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("episode exceeded {steps} primitive steps")]
    StepCap { steps: usize },
    #[error("interruption budget must be at least 1")]
    ZeroBudget,
    #[error(transparent)]
    Decomp(#[from] DecompError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// States, actions and rewards of one executed episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    /// State before each step.
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub end: usize,
    /// Deepest stack reached, counting the primitive frame.
    pub max_depth: usize,
    /// Stopped at the step cap without reaching a terminal state.
    pub truncated: bool,
}

impl Trajectory {
    fn starting_at(s: usize) -> Self {
        Self { end: s, ..Default::default() }
    }

    fn push(&mut self, s: usize, a: usize, r: f64, next: usize) {
        self.states.push(s);
        self.actions.push(a);
        self.rewards.push(r);
        self.end = next;
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        self.rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
    }
}

/// Executes `policy` from `start` with the stack interpreter: descend to a
/// primitive, run it, then pop every frame that has terminated.
pub fn run_hierarchical_episode<R: Rng + ?Sized>(
    graph: &MaxqGraph,
    model: &TabularModel,
    policy: &dyn HierarchicalPolicy,
    start: usize,
    rng: &mut R,
    step_cap: usize,
) -> Result<Trajectory, ExecError> {
    run_stack(graph, model, policy, start, rng, step_cap, None)
}

/// Hierarchical-greedy execution of `store`. With `l = Some(1)` every step
/// takes the primitive at the end of the best path from the root; with a
/// larger budget the greedy hierarchical policy runs and is sent back to the
/// root after every `l` primitives. `None` never interrupts.
pub fn run_hg_episode<R: Rng + ?Sized>(
    graph: &MaxqGraph,
    model: &TabularModel,
    store: &ValueStore,
    start: usize,
    rng: &mut R,
    l: Option<usize>,
    step_cap: usize,
) -> Result<Trajectory, ExecError> {
    match l {
        Some(0) => Err(ExecError::ZeroBudget),
        Some(1) => {
            let root = graph.root();
            let mut traj = Trajectory::starting_at(start);
            traj.max_depth = graph.depth();
            let mut s = start;
            while !graph.terminated(root, s, &[]) && !model.is_terminal(s) {
                if traj.len() >= step_cap {
                    return Err(ExecError::StepCap { steps: traj.len() });
                }
                let a = evaluate_max_node(store, graph, root, s, &[])?.action;
                let (next, r) = sample_transition(model, s, a, rng)?;
                traj.push(s, a, r, next);
                s = next;
            }
            Ok(traj)
        }
        _ => run_stack(graph, model, &GreedyPolicy(store), start, rng, step_cap, l),
    }
}

/// Runs the policy that is greedy in `v` one step ahead, stopping (with
/// `truncated` set) after `step_cap` steps.
pub fn run_improved_episode<R: Rng + ?Sized>(
    model: &TabularModel,
    v: &TabularValue,
    start: usize,
    rng: &mut R,
    step_cap: usize,
) -> Result<Trajectory, ExecError> {
    run_flat_policy(model, &one_step_improved_policy(model, v), start, rng, step_cap)
}

/// Runs a stationary flat policy; stops at a terminal state or the step cap.
pub fn run_flat_policy<R: Rng + ?Sized>(
    model: &TabularModel,
    pi: &PolicyMap,
    start: usize,
    rng: &mut R,
    step_cap: usize,
) -> Result<Trajectory, ExecError> {
    let mut traj = Trajectory::starting_at(start);
    let mut s = start;
    while !model.is_terminal(s) {
        if traj.len() >= step_cap {
            traj.truncated = true;
            break;
        }
        let a = pi.action(s);
        let (next, r) = sample_transition(model, s, a, rng)?;
        traj.push(s, a, r, next);
        s = next;
    }
    Ok(traj)
}

/// `v_of(root, s)` for every state, 0 where the episode is over.
pub fn root_values(store: &ValueStore, graph: &MaxqGraph, model: &TabularModel) -> Result<TabularValue, DecompError> {
    let root = graph.root();
    (0..model.num_states())
        .map(|s| {
            if model.is_terminal(s) || graph.terminated(root, s, &[]) {
                Ok(0.0)
            } else {
                v_of(store, graph, root, s, &[])
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map(TabularValue)
}

/// The stationary flat policy that hierarchical-greedy execution with a budget
/// of one follows: the best-path primitive at every live state.
pub fn hg_policy_map(store: &ValueStore, graph: &MaxqGraph, model: &TabularModel) -> Result<PolicyMap, DecompError> {
    let root = graph.root();
    (0..model.num_states())
        .map(|s| {
            if model.is_terminal(s) || graph.terminated(root, s, &[]) {
                Ok(0)
            } else {
                evaluate_max_node(store, graph, root, s, &[]).map(|m| m.action)
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map(PolicyMap)
}

fn run_stack<R: Rng + ?Sized>(
    graph: &MaxqGraph,
    model: &TabularModel,
    policy: &dyn HierarchicalPolicy,
    start: usize,
    rng: &mut R,
    step_cap: usize,
    budget: Option<usize>,
) -> Result<Trajectory, ExecError> {
    let root = graph.root();
    let mut traj = Trajectory::starting_at(start);
    let mut stack: Vec<(NodeId, Params)> = vec![(root, Params::new())];
    let mut s = start;
    let mut since_root = 0;
    while !graph.terminated(root, s, &[]) && !model.is_terminal(s) {
        if traj.len() >= step_cap {
            return Err(ExecError::StepCap { steps: traj.len() });
        }
        loop {
            let (node, params) = stack.last().expect("root frame");
            if graph.node(*node).is_primitive() {
                break;
            }
            let (e, cp) = policy.choose(graph, *node, s, params)?;
            stack.push((graph.edge(e).child, cp));
        }
        traj.max_depth = traj.max_depth.max(stack.len());
        let (leaf, _) = stack.pop().expect("primitive frame");
        let a = graph.action_of(leaf).expect("primitive");
        let (next, r) = sample_transition(model, s, a, rng)?;
        traj.push(s, a, r, next);
        s = next;
        since_root += 1;
        // Pop the outermost terminated frame and everything above it.
        if let Some(k) = stack.iter().position(|(n, p)| graph.terminated(*n, s, p)) {
            stack.truncate(k.max(1));
        }
        if budget.is_some_and(|l| since_root >= l) {
            stack.truncate(1);
            since_root = 0;
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::decomp::solve_recursively_optimal;
    use crate::envs::{build_taxi, TaxiConfig};
    use crate::mdp::{policy_evaluation, value_iteration};

    #[test]
    fn oracle_policy_return_matches_its_value() {
        let (m, g) = build_taxi(&TaxiConfig::default()).unwrap();
        let sol = solve_recursively_optimal(&g, &m, 1e-12).unwrap();
        let v = root_values(&sol.store, &g, &m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for &(s0, _) in m.start().iter().step_by(7) {
            let t = run_hierarchical_episode(&g, &m, &sol.policy, s0, &mut rng, 1000).unwrap();
            assert!((t.total_reward() - v.get(s0)).abs() < 1e-9);
            assert!(t.max_depth <= g.depth() + 1);
            let hg = run_hg_episode(&g, &m, &sol.store, s0, &mut rng, None, 1000).unwrap();
            assert_eq!(hg.actions, t.actions);
        }
    }

    #[test]
    fn terminated_root_gives_an_empty_trajectory() {
        let (m, g) = build_taxi(&TaxiConfig::default()).unwrap();
        let sol = solve_recursively_optimal(&g, &m, 1e-12).unwrap();
        let done = (0..m.num_states()).find(|&s| m.is_terminal(s)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = run_hierarchical_episode(&g, &m, &sol.policy, done, &mut rng, 10).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.end, done);
        assert!(matches!(run_hg_episode(&g, &m, &sol.store, done, &mut rng, Some(0), 10), Err(ExecError::ZeroBudget)));
    }

    #[test]
    fn budget_of_one_follows_the_best_path() {
        let (m, g) = build_taxi(&TaxiConfig { fickle: true, ..Default::default() }).unwrap();
        let sol = solve_recursively_optimal(&g, &m, 1e-12).unwrap();
        let pi = hg_policy_map(&sol.store, &g, &m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &(s0, _) in m.start().iter().step_by(11) {
            let t = run_hg_episode(&g, &m, &sol.store, s0, &mut rng, Some(1), 1000).unwrap();
            for (s, a) in t.states.iter().zip(&t.actions) {
                assert_eq!(pi.action(*s), *a);
            }
        }
        // Stepping greedily never loses to committing to subtasks.
        let hg = policy_evaluation(&m, &pi, 1e-12).unwrap();
        let h = root_values(&sol.store, &g, &m).unwrap();
        assert!((0..m.num_states()).all(|s| hg.get(s) >= h.get(s) - 1e-9));
    }

    #[test]
    fn improved_execution() {
        let (m, _) = build_taxi(&TaxiConfig::default()).unwrap();
        let vstar = value_iteration(&m, 1e-12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s0 = m.start()[0].0;
        let t = run_improved_episode(&m, &vstar, s0, &mut rng, 1000).unwrap();
        assert_eq!(t.total_reward(), vstar.get(s0));
        // Myopic: with nothing to look forward to every move looks alike and
        // the first ranked action repeats.
        let zero = TabularValue::zeros(m.num_states());
        let t = run_improved_episode(&m, &zero, s0, &mut rng, 50).unwrap();
        assert!(t.truncated);
        assert_eq!(t.len(), 50);
        assert!(t.actions.iter().all(|&a| a == t.actions[0]));
    }
}
