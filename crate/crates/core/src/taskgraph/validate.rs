use std::fmt;

use crate::mdp::TabularModel;

use super::format::{parse_graph, Registry};
use super::graph::*;
use super::GraphError;

/// One named check and its outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: &str, failures: Vec<String>) {
        let passed = failures.is_empty();
        let detail = if passed {
            "ok".to_string()
        } else {
            let extra = if failures.len() > 3 { format!(" (+{} more)", failures.len() - 3) } else { String::new() };
            format!("{}{extra}", failures.iter().take(3).cloned().collect::<Vec<_>>().join("; "))
        };
        self.checks.push(Check { name: name.into(), passed, detail });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// States, per node and parameter vector, where the node can be on the stack.
///
/// A state outside a node's set is shielded: every path from the root to the
/// node passes through a terminated ancestor (or a child that cannot be
/// invoked there).
#[derive(Debug, Clone)]
pub struct ActiveSets {
    sets: Vec<Vec<Vec<bool>>>,
}

impl ActiveSets {
    pub fn compute(graph: &MaxqGraph, model: &TabularModel) -> Self {
        let n = model.num_states();
        let mut sets: Vec<Vec<Vec<bool>>> =
            graph.nodes().iter().map(|nd| vec![vec![false; n]; nd.binding_count()]).collect();
        let root = graph.root();
        for s in 0..n {
            sets[root][0][s] = !model.is_terminal(s) && !graph.terminated(root, s, &[]);
        }
        let mut order = graph.bottom_up();
        order.reverse();
        for i in order {
            for b in graph.all_bindings(i) {
                let bi = graph.binding_index(i, &b);
                for s in 0..n {
                    if !sets[i][bi][s] {
                        continue;
                    }
                    for &e in graph.node(i).children() {
                        if let Some(cp) = graph.executable(e, s, &b) {
                            let child = graph.edge(e).child;
                            let ci = graph.binding_index(child, &cp);
                            sets[child][ci][s] = true;
                        }
                    }
                }
            }
        }
        Self { sets }
    }

    #[inline]
    pub fn is_active(&self, graph: &MaxqGraph, node: NodeId, params: &[usize], s: usize) -> bool {
        self.sets[node][graph.binding_index(node, params)][s]
    }

    /// True if the node is active in `s` under some parameter vector.
    pub fn any_active(&self, node: NodeId, s: usize) -> bool {
        self.sets[node].iter().any(|v| v[s])
    }

    pub fn count(&self, node: NodeId) -> usize {
        self.sets[node].iter().map(|v| v.iter().filter(|&&x| x).count()).sum()
    }
}

/// Parses a description and validates it; parse and structure errors become failed checks.
pub fn validate_description(text: &str, model: &TabularModel, reg: &Registry) -> (Option<MaxqGraph>, ValidationReport) {
    match parse_graph(text, model, reg) {
        Ok(g) => {
            let r = validate_graph(&g, model);
            (Some(g), r)
        }
        Err(e) => {
            let mut r = ValidationReport::default();
            let name = match e {
                GraphError::Cyclic(_) => "acyclic",
                _ => "well-formed",
            };
            r.push(name, vec![e.to_string()]);
            (None, r)
        }
    }
}

pub fn validate_graph(graph: &MaxqGraph, model: &TabularModel) -> ValidationReport {
    let mut report = ValidationReport::default();
    let sp = graph.space();
    let n = model.num_states();

    report.push(
        "acyclic",
        graph.find_cycle().map(|c| vec![format!("cycle {}", c.join(" -> "))]).unwrap_or_default(),
    );

    let mut fails = Vec::new();
    if sp != model.space() {
        fails.push("graph and model use different state spaces".to_string());
    }
    for leaf in graph.leaves() {
        match graph.action_of(leaf) {
            Some(a) if a < model.num_actions() => {}
            _ => fails.push(format!("{} has no model action", graph.node(leaf).name)),
        }
    }
    for (e, edge) in graph.edges().iter().enumerate() {
        if graph.node(edge.child).is_primitive() && !edge.bind.is_empty() {
            fails.push(format!("{} binds parameters of a primitive", graph.describe_edge(e)));
        }
    }
    report.push("primitive leaves", fails);

    let active = ActiveSets::compute(graph, model);

    let mut fails = Vec::new();
    for (e, edge) in graph.edges().iter().enumerate() {
        for b in graph.all_bindings(edge.parent) {
            if let Some(s) =
                (0..n).find(|&s| active.is_active(graph, edge.parent, &b, s) && graph.child_params(e, s, &b).is_none())
            {
                fails.push(format!("{} has no valid binding at [{}]", graph.describe_edge(e), sp.describe(s)));
                break;
            }
        }
    }
    report.push("bindings computable", fails);

    let mut goal_fails = Vec::new();
    let mut pseudo_fails = Vec::new();
    for i in graph.composites() {
        let node = graph.node(i);
        for b in graph.all_bindings(i) {
            if let Some(s) = (0..n).find(|&s| graph.goal(i, s, &b) && !graph.terminated(i, s, &b)) {
                goal_fails.push(format!("{}{:?} goal without termination at [{}]", node.name, b.as_slice(), sp.describe(s)));
            }
            if let NodeKind::Composite { pseudo: PseudoReward::Func { eval, name }, .. } = &node.kind {
                if let Some(s) = (0..n).find(|&s| graph.goal(i, s, &b) && eval(sp, s, &b) != 0.0) {
                    pseudo_fails.push(format!("{} ({name}) nonzero on goal [{}]", node.name, sp.describe(s)));
                }
            }
        }
    }
    report.push("goal implies termination", goal_fails);
    report.push("pseudo-reward zero on goals", pseudo_fails);

    let mut fails = Vec::new();
    for i in graph.composites() {
        for b in graph.all_bindings(i) {
            let stuck = (0..n).find(|&s| {
                active.is_active(graph, i, &b, s) && graph.node(i).children().iter().all(|&e| graph.executable(e, s, &b).is_none())
            });
            if let Some(s) = stuck {
                fails.push(format!("{}{:?} has no executable child at [{}]", graph.node(i).name, b.as_slice(), sp.describe(s)));
            }
        }
    }
    report.push("executable child exists", fails);

    if let Some(split) = graph.split() {
        let mut fails = Vec::new();
        for s in (0..n).filter(|&s| !model.is_terminal(s)) {
            for a in 0..model.num_actions() {
                for o in model.outcomes(s, a) {
                    let routed: f64 = split.route(sp, s, a, o.next, o.reward).iter().map(|x| x.1).sum();
                    let leaf = split.leaf_part(sp, s, a, o.next, o.reward);
                    if (routed + leaf - o.reward).abs() > 1e-12 {
                        fails.push(format!("split does not sum at [{}]", sp.describe(s)));
                    }
                }
            }
        }
        fails.truncate(10);
        report.push("reward split sums", fails);
    }
    report
}
