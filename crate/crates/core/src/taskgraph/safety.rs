//! Checks that declared abstraction keys are exact.
//!
//! Each table key drops some state variables. A drop is accepted when one of
//! these holds, checked by exhaustive enumeration over the model:
//!
//! * the node's values do not depend on the variable at all (the node's
//!   `relevant` set excludes it and its subtree neither reads nor influences
//!   it through the kept variables);
//! * the child always finishes in the same relevant state, whatever state it
//!   was started from within the key's class (undiscounted problems only);
//! * a leaf's expected reward is equal across the key's class;
//! * the child always ends the parent in a goal state, so the completion is 0;
//! * the key is only undefined where the entry can never be consulted.
//!
//! Environment termination is treated as an exogenous end of the episode and
//! is not part of any node's own dynamics here.

use std::fmt;

use rustc_hash::{FxHashMap, FxHashSet};

use crate::mdp::TabularModel;

use super::graph::*;
use super::storage::{edge_key, leaf_key, KeyMode};
use super::validate::ActiveSets;

const REWARD_TOL: f64 = 1e-9;
const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subject {
    Node(NodeId),
    Edge(EdgeId),
    Leaf(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// Dropped variables do not influence the node's subtree.
    MaxNodeIrrelevance,
    /// Leaf expected reward constant within a key class.
    LeafIrrelevance,
    /// Child end state identical within a key class.
    ResultDistributionIrrelevance,
    /// Child always ends the parent in a goal state.
    Termination,
    /// Keys are defined wherever the entry can be consulted.
    Shielding,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::MaxNodeIrrelevance => "max-node irrelevance",
            Condition::LeafIrrelevance => "leaf irrelevance",
            Condition::ResultDistributionIrrelevance => "result-distribution irrelevance",
            Condition::Termination => "termination",
            Condition::Shielding => "shielding",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Safe,
    /// Two states that the abstraction merges but that must be told apart.
    Failed { witness: (usize, usize), reason: String },
}

impl Verdict {
    pub fn is_safe(&self) -> bool {
        matches!(self, Verdict::Safe)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyEntry {
    pub subject: Subject,
    pub label: String,
    pub condition: Condition,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SafetyReport {
    pub entries: Vec<SafetyEntry>,
    /// Rendered `describe` output of witness states, keyed by state index.
    pub described: Vec<(usize, String)>,
}

impl SafetyReport {
    pub fn is_safe(&self) -> bool {
        self.entries.iter().all(|e| e.verdict.is_safe())
    }

    pub fn failures(&self) -> impl Iterator<Item = &SafetyEntry> {
        self.entries.iter().filter(|e| !e.verdict.is_safe())
    }

    pub fn find(&self, label: &str, condition: Condition) -> Option<&SafetyEntry> {
        self.entries.iter().find(|e| e.label == label && e.condition == condition)
    }

    /// All entries about a node, its edges, or (for leaves) the leaf itself.
    pub fn about<'a>(&'a self, graph: &'a MaxqGraph, node: NodeId) -> impl Iterator<Item = &'a SafetyEntry> {
        self.entries.iter().filter(move |e| match e.subject {
            Subject::Node(n) | Subject::Leaf(n) => n == node,
            Subject::Edge(x) => graph.edge(x).parent == node,
        })
    }
}

impl fmt::Display for SafetyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let describe = |s: usize| {
            self.described.iter().find(|d| d.0 == s).map(|d| d.1.clone()).unwrap_or_else(|| s.to_string())
        };
        for e in &self.entries {
            match &e.verdict {
                Verdict::Safe => writeln!(f, "[safe] {} / {}", e.label, e.condition)?,
                Verdict::Failed { witness, reason } => writeln!(
                    f,
                    "[FAIL] {} / {}: {reason}; states [{}] vs [{}]",
                    e.label,
                    e.condition,
                    describe(witness.0),
                    describe(witness.1)
                )?,
            }
        }
        Ok(())
    }
}

struct Ctx<'a> {
    graph: &'a MaxqGraph,
    model: &'a TabularModel,
    active: ActiveSets,
    states: Vec<usize>,
}

impl Ctx<'_> {
    /// Packed values of the variables selected by `mask`.
    fn project(&self, s: usize, mask: &[bool]) -> u64 {
        let sp = self.graph.space();
        mask.iter().enumerate().filter(|(_, &m)| m).fold(0u64, |acc, (v, _)| acc * sp.card(v) as u64 + sp.value(s, v) as u64)
    }

    /// Live (state, parent binding, child binding) triples of an edge.
    fn live(&self, e: EdgeId) -> Vec<(usize, Params, Params)> {
        let g = self.graph;
        let p = g.edge(e).parent;
        let mut out = Vec::new();
        for b in g.all_bindings(p) {
            for &s in &self.states {
                if self.active.is_active(g, p, &b, s) {
                    if let Some(cp) = g.executable(e, s, &b) {
                        out.push((s, b.clone(), cp));
                    }
                }
            }
        }
        out
    }

    fn leaf_actions(&self, node: NodeId) -> Vec<usize> {
        let mut acts: Vec<usize> = self.graph.subtree(node).into_iter().filter_map(|n| self.graph.action_of(n)).collect();
        acts.sort_unstable();
        acts.dedup();
        acts
    }

    /// States where `child(cp)` can stop when started in `s0` under any policy.
    fn reachable_ends(&self, child: NodeId, cp: &[usize], s0: usize) -> Vec<usize> {
        let (g, m) = (self.graph, self.model);
        if let Some(a) = g.action_of(child) {
            let mut ends: Vec<usize> = m.outcomes(s0, a).iter().map(|o| o.next).collect();
            ends.sort_unstable();
            ends.dedup();
            return ends;
        }
        let acts = self.leaf_actions(child);
        let mut seen = FxHashSet::default();
        let mut stack = vec![s0];
        let mut ends = Vec::new();
        seen.insert(s0);
        while let Some(x) = stack.pop() {
            if x != s0 && (m.is_terminal(x) || g.terminated(child, x, cp)) {
                ends.push(x);
                continue;
            }
            for &a in &acts {
                for o in m.outcomes(x, a) {
                    if seen.insert(o.next) {
                        stack.push(o.next);
                    }
                }
            }
        }
        ends.sort_unstable();
        ends
    }

    fn leaf_reward(&self, s: usize, a: usize, next: usize, r: f64) -> f64 {
        match self.graph.split() {
            Some(sp) => sp.leaf_part(self.graph.space(), s, a, next, r),
            None => r,
        }
    }

    fn max_node_irrelevance(&self, i: NodeId, mask: &[bool]) -> Verdict {
        let g = self.graph;
        let domain: Vec<usize> = self
            .states
            .iter()
            .copied()
            .filter(|&s| g.all_bindings(i).iter().any(|b| !g.terminated(i, s, b)))
            .collect();
        let sub = g.subtree(i);

        for &k in sub.iter().filter(|&&k| !g.node(k).is_primitive()) {
            for b in g.all_bindings(k) {
                let mut seen: FxHashMap<u64, (usize, (bool, bool, u64))> = FxHashMap::default();
                for &s in &domain {
                    let sig = (g.terminated(k, s, &b), g.goal(k, s, &b), g.pseudo_reward(k, s, &b).to_bits());
                    let (s0, sig0) = *seen.entry(self.project(s, mask)).or_insert((s, sig));
                    if sig0 != sig {
                        return Verdict::Failed {
                            witness: (s0, s),
                            reason: format!("termination, goal or pseudo-reward of {}{:?} reads a dropped variable", g.node(k).name, b.as_slice()),
                        };
                    }
                }
                for &e in g.node(k).children() {
                    let mut seen: FxHashMap<u64, (usize, Option<Params>)> = FxHashMap::default();
                    for &s in &domain {
                        let cp = g.child_params(e, s, &b);
                        let (s0, cp0) = seen.entry(self.project(s, mask)).or_insert((s, cp.clone())).clone();
                        if cp0 != cp {
                            return Verdict::Failed {
                                witness: (s0, s),
                                reason: format!("binding of {} reads a dropped variable", g.edge(e).name),
                            };
                        }
                    }
                }
            }
        }

        for a in self.leaf_actions(i) {
            let mut marginals: FxHashMap<u64, (usize, Vec<(u64, f64)>)> = FxHashMap::default();
            let mut rewards: FxHashMap<(u64, u64), (usize, f64)> = FxHashMap::default();
            for &s in &domain {
                let x = self.project(s, mask);
                let mut dist: Vec<(u64, f64)> = Vec::new();
                for o in self.model.outcomes(s, a) {
                    let x2 = self.project(o.next, mask);
                    let r = self.leaf_reward(s, a, o.next, o.reward);
                    let (s0, r0) = *rewards.entry((x, x2)).or_insert((s, r));
                    if (r0 - r).abs() > REWARD_TOL {
                        return Verdict::Failed {
                            witness: (s0, s),
                            reason: format!(
                                "reward of {} depends on a dropped variable ({r0} vs {r})",
                                self.model.action_names()[a]
                            ),
                        };
                    }
                    match dist.iter_mut().find(|d| d.0 == x2) {
                        Some(d) => d.1 += o.prob,
                        None => dist.push((x2, o.prob)),
                    }
                }
                dist.sort_by_key(|d| d.0);
                let (s0, d0) = marginals.entry(x).or_insert_with(|| (s, dist.clone()));
                let same = d0.len() == dist.len()
                    && d0.iter().zip(&dist).all(|(p, q)| p.0 == q.0 && (p.1 - q.1).abs() <= PROB_TOL);
                if !same {
                    return Verdict::Failed {
                        witness: (*s0, s),
                        reason: format!(
                            "kept variables' transition under {} depends on a dropped variable",
                            self.model.action_names()[a]
                        ),
                    };
                }
            }
        }
        Verdict::Safe
    }

    fn termination(&self, e: EdgeId) -> Verdict {
        let g = self.graph;
        let edge = g.edge(e);
        for (s, b, cp) in self.live(e) {
            for end in self.reachable_ends(edge.child, &cp, s) {
                if !self.model.is_terminal(end) && !g.goal(edge.parent, end, &b) {
                    return Verdict::Failed {
                        witness: (s, end),
                        reason: format!("{} can end outside the goal of {}", g.node(edge.child).name, g.node(edge.parent).name),
                    };
                }
            }
        }
        Verdict::Safe
    }

    fn shielding(&self, e: EdgeId) -> Verdict {
        for (s, b, _) in self.live(e) {
            if edge_key(self.graph, KeyMode::Abstract, e, s, &b).is_none() {
                return Verdict::Failed { witness: (s, s), reason: "key undefined where the entry is consulted".into() };
            }
        }
        Verdict::Safe
    }

    fn result_irrelevance(&self, e: EdgeId, mask: &[bool]) -> Verdict {
        let g = self.graph;
        let edge = g.edge(e);
        let primitive = g.node(edge.child).is_primitive();
        let live = self.live(e);
        if !primitive && self.model.gamma() < 1.0 {
            if let Some((s, _, _)) = live.first() {
                return Verdict::Failed { witness: (*s, *s), reason: "requires an undiscounted problem".into() };
            }
        }
        let tag = |x: usize| self.project(x, mask) * 2 + u64::from(self.model.is_terminal(x));
        let mut seen: FxHashMap<u64, (usize, Vec<(u64, f64)>)> = FxHashMap::default();
        for (s, b, cp) in live {
            let Some(key) = edge_key(g, KeyMode::Abstract, e, s, &b) else { continue };
            let bi = g.binding_index(edge.parent, &b) as u64;
            let mut sig: Vec<(u64, f64)> = Vec::new();
            if let Some(a) = g.action_of(edge.child) {
                for o in self.model.outcomes(s, a) {
                    let t = tag(o.next);
                    match sig.iter_mut().find(|d| d.0 == t) {
                        Some(d) => d.1 += o.prob,
                        None => sig.push((t, o.prob)),
                    }
                }
            } else {
                let ends = self.reachable_ends(edge.child, &cp, s);
                let mut tags: Vec<u64> = ends.iter().map(|&x| tag(x)).collect();
                tags.sort_unstable();
                tags.dedup();
                if tags.len() > 1 {
                    let a = ends.iter().copied().find(|&x| tag(x) == tags[0]).unwrap_or(s);
                    let z = ends.iter().copied().find(|&x| tag(x) == tags[1]).unwrap_or(s);
                    return Verdict::Failed {
                        witness: (a, z),
                        reason: format!(
                            "{} started in state {s} can end in more than one relevant state",
                            g.node(edge.child).name
                        ),
                    };
                }
                sig = tags.into_iter().map(|t| (t, 1.0)).collect();
            }
            sig.sort_by_key(|d| d.0);
            for d in &mut sig {
                d.0 = d.0.wrapping_mul(1 << 20).wrapping_add(bi);
            }
            let (s0, sig0) = seen.entry(key).or_insert_with(|| (s, sig.clone()));
            let same =
                sig0.len() == sig.len() && sig0.iter().zip(&sig).all(|(p, q)| p.0 == q.0 && (p.1 - q.1).abs() <= PROB_TOL);
            if !same {
                return Verdict::Failed {
                    witness: (*s0, s),
                    reason: format!("states sharing a key of {} reach different results", edge.name),
                };
            }
        }
        Verdict::Safe
    }

    fn leaf_irrelevance(&self, leaf: NodeId) -> Verdict {
        let g = self.graph;
        let Some(a) = g.action_of(leaf) else { return Verdict::Safe };
        let mut seen: FxHashMap<u64, (usize, f64)> = FxHashMap::default();
        for &s in self.states.iter().filter(|&&s| self.active.any_active(leaf, s)) {
            let Some(key) = leaf_key(g, KeyMode::Abstract, leaf, s) else {
                return Verdict::Failed { witness: (s, s), reason: "key undefined where the leaf runs".into() };
            };
            let er: f64 = self.model.outcomes(s, a).iter().map(|o| o.prob * self.leaf_reward(s, a, o.next, o.reward)).sum();
            let (s0, r0) = *seen.entry(key).or_insert((s, er));
            if (r0 - er).abs() > REWARD_TOL {
                return Verdict::Failed {
                    witness: (s0, s),
                    reason: format!("expected reward differs within a key ({r0} vs {er})"),
                };
            }
        }
        Verdict::Safe
    }
}

/// True if `key` keeps every variable in `mask` and every parent parameter.
fn key_covers(edge: &Edge, mask: &[bool], num_params: usize) -> bool {
    let reads: Vec<usize> = edge.key.iter().flat_map(|f| f.reads()).collect();
    let vars_ok = mask.iter().enumerate().all(|(v, &m)| !m || reads.contains(&v));
    let params_ok = (0..num_params).all(|p| edge.key.iter().any(|f| matches!(f, Feature::Param(q) if *q == p)));
    vars_ok && params_ok
}

/// Checks every declared abstraction of `graph` against `model`.
pub fn check_abstraction_safety(graph: &MaxqGraph, model: &TabularModel) -> SafetyReport {
    let ctx = Ctx {
        graph,
        model,
        active: ActiveSets::compute(graph, model),
        states: (0..model.num_states()).filter(|&s| !model.is_terminal(s)).collect(),
    };
    let nvars = graph.space().vars().len();
    let mut entries = Vec::new();
    for i in graph.composites() {
        let node = graph.node(i);
        let mask = node.relevant_mask(nvars);
        if mask.iter().any(|m| !m) {
            entries.push(SafetyEntry {
                subject: Subject::Node(i),
                label: node.name.clone(),
                condition: Condition::MaxNodeIrrelevance,
                verdict: ctx.max_node_irrelevance(i, &mask),
            });
        }
        for &e in node.children() {
            let edge = graph.edge(e);
            let mut push = |condition, verdict| {
                entries.push(SafetyEntry { subject: Subject::Edge(e), label: edge.name.clone(), condition, verdict })
            };
            match edge.storage {
                Storage::Zero => push(Condition::Termination, ctx.termination(e)),
                Storage::Table => {
                    push(Condition::Shielding, ctx.shielding(e));
                    if !key_covers(edge, &mask, node.params.len()) {
                        push(Condition::ResultDistributionIrrelevance, ctx.result_irrelevance(e, &mask));
                    }
                }
            }
        }
    }
    for leaf in graph.leaves() {
        entries.push(SafetyEntry {
            subject: Subject::Leaf(leaf),
            label: graph.node(leaf).name.clone(),
            condition: Condition::LeafIrrelevance,
            verdict: ctx.leaf_irrelevance(leaf),
        });
    }
    let mut described: Vec<(usize, String)> = entries
        .iter()
        .filter_map(|e| match &e.verdict {
            Verdict::Failed { witness, .. } => Some([witness.0, witness.1]),
            Verdict::Safe => None,
        })
        .flatten()
        .map(|s| (s, graph.space().describe(s)))
        .collect();
    described.sort_by_key(|d| d.0);
    described.dedup_by_key(|d| d.0);
    SafetyReport { entries, described }
}
