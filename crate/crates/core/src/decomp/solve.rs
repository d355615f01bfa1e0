//! Exact values of a hierarchical policy by dynamic programming, node by node
//! from the leaves up.
//!
//! Each composite node with a fixed binding is a semi-Markov decision problem
//! over its live states (not terminated, not terminal in the model). A child
//! is summarised by its real value, the reward it routes upward, and its
//! discounted exit kernel `D(s) = [(s', E[gamma^N; exit at s'])]`.
//!
//! Routed reward components are credited to the innermost frame of their
//! target node; components whose target is never on the stack go to the root.
//! An episode ending inside a node that has not terminated contributes a
//! continuation of 0 and no pseudo-reward.

use std::collections::VecDeque;

use rustc_hash::FxHashMap;

use crate::mdp::{TabularModel, TIE_TOL};
use crate::taskgraph::{EdgeId, KeyMode, MaxqGraph, NodeId};

use super::eval::{executable_children, HierarchicalPolicy, TablePolicy};
use super::store::ValueStore;
use super::DecompError;

const MAX_SWEEPS: usize = 1_000_000;
const DIVERGENCE_BOUND: f64 = 1e12;
/// Exit-kernel weights are iterated until no weight moves by more than this.
const KERNEL_TOL: f64 = 1e-15;

/// Rewards credited to other nodes along a step.
type Routed = Vec<(NodeId, f64)>;
/// Successor states with discounted probabilities.
type Successors = Vec<(usize, f64)>;

/// Solved store (full keys) and the policy it encodes.
#[derive(Debug, Clone)]
pub struct Solution {
    pub store: ValueStore,
    pub policy: TablePolicy,
}

/// Solves for the recursively optimal hierarchical policy and its `C`, `C~`
/// and leaf tables. Ties are broken by edge order.
pub fn solve_recursively_optimal(graph: &MaxqGraph, model: &TabularModel, tol: f64) -> Result<Solution, DecompError> {
    Solver::new(graph, model, tol, None)?.run()
}

/// Exact `C^pi`, `C~^pi` and leaf tables of a fixed hierarchical policy.
pub fn evaluate_hierarchical_policy(
    graph: &MaxqGraph,
    model: &TabularModel,
    policy: &dyn HierarchicalPolicy,
    tol: f64,
) -> Result<Solution, DecompError> {
    Solver::new(graph, model, tol, Some(policy))?.run()
}

/// What one child invocation from a state yields for its parent.
#[derive(Debug, Clone)]
struct Opt {
    edge: EdgeId,
    /// Real value of the child (rewards credited inside its subtree).
    child_value: f64,
    /// Reward routed to the parent itself during the child.
    own: f64,
    /// Reward routed to other nodes, still looking for their frame.
    routed: Vec<(NodeId, f64)>,
    /// `(successor live index or None, successor state, discounted weight)`.
    next: Vec<(Option<usize>, usize, f64)>,
}

/// Summary of one (node, binding) after solving.
#[derive(Debug, Clone, Default)]
struct Solved {
    index: FxHashMap<usize, usize>,
    value: Vec<f64>,
    exits: Vec<Vec<(usize, f64)>>,
    routed: Vec<(NodeId, Vec<f64>)>,
}

struct Solver<'a> {
    graph: &'a MaxqGraph,
    model: &'a TabularModel,
    tol: f64,
    fixed: Option<&'a dyn HierarchicalPolicy>,
    solved: FxHashMap<(NodeId, usize), Solved>,
    store: ValueStore,
    policy: TablePolicy,
}

impl<'a> Solver<'a> {
    fn new(
        graph: &'a MaxqGraph,
        model: &'a TabularModel,
        tol: f64,
        fixed: Option<&'a dyn HierarchicalPolicy>,
    ) -> Result<Self, DecompError> {
        if !(tol > 0.0) {
            return Err(crate::mdp::MdpError::InvalidTolerance(tol).into());
        }
        Ok(Self {
            graph,
            model,
            tol,
            fixed,
            solved: FxHashMap::default(),
            store: ValueStore::new(graph, KeyMode::Full),
            policy: TablePolicy::default(),
        })
    }

    fn run(mut self) -> Result<Solution, DecompError> {
        let g = self.graph;
        for leaf in g.leaves().collect::<Vec<_>>() {
            let a = g.action_of(leaf).expect("leaf");
            for s in (0..self.model.num_states()).filter(|&s| !self.model.is_terminal(s)) {
                let r = self.primitive(s, a).0;
                self.store.set_leaf_value(g, leaf, s, r)?;
            }
        }
        for node in g.bottom_up() {
            for b in g.all_bindings(node) {
                let solved = self.solve_node(node, &b)?;
                self.solved.insert((node, g.binding_index(node, &b)), solved);
            }
        }
        Ok(Solution { store: self.store, policy: self.policy })
    }

    /// Expected leaf reward, routed rewards and discounted successors of `a` in `s`.
    fn primitive(&self, s: usize, a: usize) -> (f64, Routed, Successors) {
        let sp = self.graph.space();
        let gamma = self.model.gamma();
        let mut leaf = 0.0;
        let mut routed: Vec<(NodeId, f64)> = Vec::new();
        let mut next = Vec::new();
        for o in self.model.outcomes(s, a) {
            match self.graph.split() {
                Some(split) => {
                    leaf += o.prob * split.leaf_part(sp, s, a, o.next, o.reward);
                    for (t, x) in split.route(sp, s, a, o.next, o.reward) {
                        add(&mut routed, t, o.prob * x);
                    }
                }
                None => leaf += o.prob * o.reward,
            }
            next.push((o.next, gamma * o.prob));
        }
        (leaf, routed, next)
    }

    fn options(&self, node: NodeId, params: &[usize], s: usize) -> Result<Vec<(EdgeId, f64, Routed, Successors)>, DecompError> {
        let g = self.graph;
        let mut out = Vec::new();
        for (e, cp) in executable_children(g, node, s, params) {
            let child = g.edge(e).child;
            if let Some(a) = g.action_of(child) {
                let (v, routed, next) = self.primitive(s, a);
                out.push((e, v, routed, next));
            } else {
                let sol = &self.solved[&(child, g.binding_index(child, &cp))];
                let k = sol.index[&s];
                let routed = sol.routed.iter().map(|(t, w)| (*t, w[k])).filter(|x| x.1 != 0.0).collect();
                out.push((e, sol.value[k], routed, sol.exits[k].clone()));
            }
        }
        if out.is_empty() {
            return Err(DecompError::NoExecutableChild { node: g.node(node).name.clone(), state: s });
        }
        Ok(out)
    }

    fn solve_node(&mut self, node: NodeId, params: &[usize]) -> Result<Solved, DecompError> {
        let g = self.graph;
        let name = || g.node(node).name.clone();
        let is_root = node == g.root();
        let live: Vec<usize> = (0..self.model.num_states())
            .filter(|&s| !self.model.is_terminal(s) && !g.terminated(node, s, params))
            .collect();
        let index: FxHashMap<usize, usize> = live.iter().enumerate().map(|(k, &s)| (s, k)).collect();
        let n = live.len();

        let mut opts: Vec<Vec<Opt>> = Vec::with_capacity(n);
        for &s in &live {
            let mut row = Vec::new();
            for (edge, child_value, routed, next) in self.options(node, params, s)? {
                let (mut own, mut rest) = (0.0, Vec::new());
                for (t, x) in routed {
                    if t == node || is_root {
                        own += x;
                    } else {
                        rest.push((t, x));
                    }
                }
                let next = next.into_iter().map(|(s2, w)| (index.get(&s2).copied(), s2, w)).collect();
                row.push(Opt { edge, child_value, own, routed: rest, next });
            }
            opts.push(row);
        }
        // Value at a successor where the node ends: pseudo-reward if it
        // terminated there, nothing if the episode ended first.
        let end_pseudo = |s2: usize| if g.terminated(node, s2, params) { g.pseudo_reward(node, s2, params) } else { 0.0 };

        let order = exit_order(&opts, None);
        if let Some(k) = (0..n).find(|&k| order.1[k] == usize::MAX) {
            return Err(DecompError::ImproperPolicy { node: name(), state: live[k] });
        }

        // Choose the policy.
        let mut choice = vec![0usize; n];
        if let Some(fixed) = self.fixed {
            for k in 0..n {
                let (e, _) = fixed.choose(g, node, live[k], params)?;
                choice[k] = opts[k].iter().position(|o| o.edge == e).ok_or_else(|| DecompError::NoPolicyEntry {
                    node: name(),
                    state: live[k],
                })?;
            }
        } else {
            let mut vt = vec![0.0; n];
            sweep(&order.0, self.tol, |k| {
                let best = opts[k]
                    .iter()
                    .map(|o| q_value(o, o.child_value + o.own, &vt, &end_pseudo))
                    .fold(f64::NEG_INFINITY, f64::max);
                let d = (best - vt[k]).abs();
                vt[k] = best;
                d
            })
            .map_err(|_| DecompError::Diverged { node: name() })?;
            if let Some(k) = (0..n).find(|&k| vt[k].abs() > DIVERGENCE_BOUND) {
                return Err(DecompError::ImproperPolicy { node: name(), state: live[k] });
            }
            for k in 0..n {
                let qs: Vec<f64> =
                    opts[k].iter().map(|o| o.child_value + (o.own + continuation(o, &vt, &end_pseudo))).collect();
                let best = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                choice[k] = (0..qs.len())
                    .filter(|&j| qs[j] >= best - TIE_TOL)
                    .min_by_key(|&j| g.edge_rank(opts[k][j].edge))
                    .expect("options");
            }
        }

        let chosen = exit_order(&opts, Some(&choice));
        if let Some(k) = (0..n).find(|&k| chosen.1[k] == usize::MAX) {
            return Err(DecompError::ImproperPolicy { node: name(), state: live[k] });
        }
        let order = chosen.0;

        // Values under the chosen policy, with and without pseudo-rewards.
        let no_pseudo = |_: usize| 0.0;
        let mut v = vec![0.0; n];
        let mut vt = vec![0.0; n];
        sweep(&order, self.tol, |k| {
            let o = &opts[k][choice[k]];
            let new = o.child_value + (o.own + continuation(o, &v, &no_pseudo));
            let newt = o.child_value + (o.own + continuation(o, &vt, &end_pseudo));
            let d = (new - v[k]).abs().max((newt - vt[k]).abs());
            v[k] = new;
            vt[k] = newt;
            d
        })
        .map_err(|_| DecompError::Diverged { node: name() })?;

        // Store both completions for every option, then the values they imply.
        for k in 0..n {
            let s = live[k];
            for o in &opts[k] {
                let c = o.own + continuation(o, &v, &no_pseudo);
                let ct = o.own + continuation(o, &vt, &end_pseudo);
                self.store.set_completion(g, o.edge, s, params, c)?;
                self.store.set_pseudo_completion(g, o.edge, s, params, ct)?;
            }
            self.policy.set(g, node, s, params, opts[k][choice[k]].edge);
        }
        let value: Vec<f64> = (0..n)
            .map(|k| {
                let o = &opts[k][choice[k]];
                o.child_value + self.store.completion(g, o.edge, live[k], params).expect("full key")
            })
            .collect();

        let exits = exit_kernel(&opts, &choice, &order);
        let routed = routed_upward(&opts, &choice, &order, self.tol).map_err(|_| DecompError::Diverged { node: name() })?;
        Ok(Solved { index, value, exits, routed })
    }
}

fn add(list: &mut Vec<(NodeId, f64)>, t: NodeId, x: f64) {
    match list.iter_mut().find(|(n, _)| *n == t) {
        Some((_, y)) => *y += x,
        None => list.push((t, x)),
    }
}

fn continuation(o: &Opt, v: &[f64], end: &dyn Fn(usize) -> f64) -> f64 {
    o.next
        .iter()
        .map(|&(k, s2, w)| {
            w * match k {
                Some(k) => v[k],
                None => end(s2),
            }
        })
        .sum()
}

fn q_value(o: &Opt, immediate: f64, v: &[f64], end: &dyn Fn(usize) -> f64) -> f64 {
    immediate + continuation(o, v, end)
}

/// Gauss-Seidel sweeps in `order` until the largest change is at most `tol`.
fn sweep(order: &[usize], tol: f64, mut update: impl FnMut(usize) -> f64) -> Result<(), ()> {
    for _ in 0..MAX_SWEEPS {
        let mut delta: f64 = 0.0;
        for &k in order {
            delta = delta.max(update(k));
        }
        if !delta.is_finite() {
            return Err(());
        }
        if delta <= tol {
            return Ok(());
        }
    }
    Err(())
}

/// Live states ordered by distance to an exit (over all options, or over the
/// chosen ones), and each state's distance (`usize::MAX` if no exit is reachable).
fn exit_order(opts: &[Vec<Opt>], choice: Option<&[usize]>) -> (Vec<usize>, Vec<usize>) {
    let n = opts.len();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for k in 0..n {
        let used: Box<dyn Iterator<Item = &Opt>> = match choice {
            Some(c) => Box::new(std::iter::once(&opts[k][c[k]])),
            None => Box::new(opts[k].iter()),
        };
        for o in used {
            for &(next, _, w) in &o.next {
                if w <= 0.0 {
                    continue;
                }
                match next {
                    Some(j) => preds[j].push(k),
                    None if dist[k] == usize::MAX => {
                        dist[k] = 0;
                        queue.push_back(k);
                    }
                    None => {}
                }
            }
        }
    }
    let mut order = Vec::with_capacity(n);
    while let Some(k) = queue.pop_front() {
        order.push(k);
        for &p in &preds[k] {
            if dist[p] == usize::MAX {
                dist[p] = dist[k] + 1;
                queue.push_back(p);
            }
        }
    }
    order.extend((0..n).filter(|&k| dist[k] == usize::MAX));
    (order, dist)
}

fn exit_kernel(opts: &[Vec<Opt>], choice: &[usize], order: &[usize]) -> Vec<Vec<(usize, f64)>> {
    let mut d: Vec<Vec<(usize, f64)>> = vec![Vec::new(); opts.len()];
    let mut acc: FxHashMap<usize, f64> = FxHashMap::default();
    for _ in 0..MAX_SWEEPS {
        let mut delta: f64 = 0.0;
        for &k in order {
            acc.clear();
            for &(next, s2, w) in &opts[k][choice[k]].next {
                match next {
                    Some(j) => {
                        for &(x, p) in &d[j] {
                            *acc.entry(x).or_insert(0.0) += w * p;
                        }
                    }
                    None => *acc.entry(s2).or_insert(0.0) += w,
                }
            }
            let mut row: Vec<(usize, f64)> = acc.iter().map(|(&x, &p)| (x, p)).collect();
            row.sort_unstable_by_key(|x| x.0);
            delta = delta.max(row_distance(&d[k], &row));
            d[k] = row;
        }
        if delta <= KERNEL_TOL {
            break;
        }
    }
    d
}

fn row_distance(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut out) = (0, 0, 0.0f64);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x.0 == y.0 => {
                out = out.max((x.1 - y.1).abs());
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x.0 < y.0 => {
                out = out.max(x.1.abs());
                i += 1;
            }
            (Some(_), Some(y)) | (None, Some(y)) => {
                out = out.max(y.1.abs());
                j += 1;
            }
            (Some(x), None) => {
                out = out.max(x.1.abs());
                i += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    out
}

fn routed_upward(opts: &[Vec<Opt>], choice: &[usize], order: &[usize], tol: f64) -> Result<Vec<(NodeId, Vec<f64>)>, ()> {
    let mut targets: Vec<NodeId> = opts.iter().flatten().flat_map(|o| o.routed.iter().map(|x| x.0)).collect();
    targets.sort_unstable();
    targets.dedup();
    let mut out = Vec::new();
    for t in targets {
        let mut w = vec![0.0; opts.len()];
        sweep(order, tol, |k| {
            let o = &opts[k][choice[k]];
            let here: f64 = o.routed.iter().filter(|x| x.0 == t).map(|x| x.1).sum();
            let new = here + o.next.iter().map(|&(j, _, p)| j.map_or(0.0, |j| p * w[j])).sum::<f64>();
            let d = (new - w[k]).abs();
            w[k] = new;
            d
        })?;
        out.push((t, w));
    }
    Ok(out)
}

/// Two live states whose full-key values disagree under one abstract key.
#[derive(Debug, Clone, PartialEq)]
pub struct Conflict {
    pub table: String,
    pub key: u64,
    pub states: (usize, usize),
    pub values: (f64, f64),
}

/// Copies a full-key store into abstract keys, reading each entry only where
/// it can be consulted. Entries whose states disagree by more than `tol` are
/// reported; the first value seen is kept.
pub fn project_store(
    full: &ValueStore,
    graph: &MaxqGraph,
    model: &TabularModel,
    tol: f64,
) -> Result<(ValueStore, Vec<Conflict>), DecompError> {
    let mut out = ValueStore::new(graph, KeyMode::Abstract);
    let mut conflicts = Vec::new();
    let states: Vec<usize> = (0..model.num_states()).filter(|&s| !model.is_terminal(s)).collect();
    for node in graph.composites().collect::<Vec<_>>() {
        for b in graph.all_bindings(node) {
            for &e in graph.node(node).children() {
                let mut seen: FxHashMap<u64, (usize, f64, f64)> = FxHashMap::default();
                for &s in &states {
                    if graph.terminated(node, s, &b) || graph.executable(e, s, &b).is_none() {
                        continue;
                    }
                    let Some(key) = crate::taskgraph::edge_key(graph, KeyMode::Abstract, e, s, &b) else { continue };
                    let (c, ct) = (full.completion(graph, e, s, &b)?, full.pseudo_completion(graph, e, s, &b)?);
                    let &mut (s0, c0, ct0) = seen.entry(key).or_insert((s, c, ct));
                    if s0 == s {
                        out.set_completion(graph, e, s, &b, c)?;
                        out.set_pseudo_completion(graph, e, s, &b, ct)?;
                    } else if (c - c0).abs() > tol || (ct - ct0).abs() > tol {
                        conflicts.push(Conflict { table: graph.edge(e).name.clone(), key, states: (s0, s), values: (c0, c) });
                    }
                }
            }
        }
    }
    for leaf in graph.leaves().collect::<Vec<_>>() {
        let mut seen: FxHashMap<u64, (usize, f64)> = FxHashMap::default();
        for &s in &states {
            let Some(key) = crate::taskgraph::leaf_key(graph, KeyMode::Abstract, leaf, s) else { continue };
            let v = full.leaf_value(graph, leaf, s)?;
            let &mut (s0, v0) = seen.entry(key).or_insert((s, v));
            if s0 == s {
                out.set_leaf_value(graph, leaf, s, v)?;
            } else if (v - v0).abs() > tol {
                conflicts.push(Conflict { table: graph.node(leaf).name.clone(), key, states: (s0, s), values: (v0, v) });
            }
        }
    }
    Ok((out, conflicts))
}
