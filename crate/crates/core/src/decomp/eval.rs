use rustc_hash::FxHashMap;

use crate::mdp::TIE_TOL;
use crate::taskgraph::{EdgeId, MaxqGraph, NodeId, Params};

use super::store::ValueStore;
use super::DecompError;

/// Index of the best `(edge, value)` pair; ties within [`TIE_TOL`] go to the
/// edge ranked first.
pub(crate) fn ordered_best<T>(graph: &MaxqGraph, items: &[(EdgeId, T, f64)]) -> Option<usize> {
    let best = items.iter().map(|x| x.2).fold(f64::NEG_INFINITY, f64::max);
    (0..items.len()).filter(|&k| items[k].2 >= best - TIE_TOL).min_by_key(|&k| graph.edge_rank(items[k].0))
}

/// Executable children of `node` in `s` with their parameters.
pub fn executable_children(graph: &MaxqGraph, node: NodeId, s: usize, params: &[usize]) -> Vec<(EdgeId, Params)> {
    graph.node(node).children().iter().filter_map(|&e| graph.executable(e, s, params).map(|cp| (e, cp))).collect()
}

/// An executable child with its value and `Q~`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChildValue {
    pub edge: EdgeId,
    pub params: Params,
    pub value: f64,
    pub q_tilde: f64,
}

/// Value and `Q~ = V + C~` of every executable child of `node`.
pub fn child_values(
    store: &ValueStore,
    graph: &MaxqGraph,
    node: NodeId,
    s: usize,
    params: &[usize],
) -> Result<Vec<ChildValue>, DecompError> {
    let mut out = Vec::new();
    for (e, cp) in executable_children(graph, node, s, params) {
        let value = v_of(store, graph, graph.edge(e).child, s, &cp)?;
        let q_tilde = value + store.pseudo_completion(graph, e, s, params)?;
        out.push(ChildValue { edge: e, params: cp, value, q_tilde });
    }
    if out.is_empty() {
        return Err(DecompError::NoExecutableChild { node: graph.node(node).name.clone(), state: s });
    }
    Ok(out)
}

/// Position of the child a greedy policy over `Q~` picks.
pub fn greedy_index(graph: &MaxqGraph, children: &[ChildValue]) -> usize {
    let best = children.iter().map(|c| c.q_tilde).fold(f64::NEG_INFINITY, f64::max);
    (0..children.len())
        .filter(|&k| children[k].q_tilde >= best - TIE_TOL)
        .min_by_key(|&k| graph.edge_rank(children[k].edge))
        .expect("non-empty")
}

/// Child a greedy policy over `Q~` picks at `node`.
pub fn greedy_child(
    store: &ValueStore,
    graph: &MaxqGraph,
    node: NodeId,
    s: usize,
    params: &[usize],
) -> Result<(EdgeId, Params), DecompError> {
    let mut cs = child_values(store, graph, node, s, params)?;
    let c = cs.swap_remove(greedy_index(graph, &cs));
    Ok((c.edge, c.params))
}

/// Value of `node` in `s`: the stored leaf reward for a primitive, otherwise
/// `V(j*) + C(node, s, j*)` where `j*` maximises `Q~`. Without pseudo-rewards
/// this is the max over children of [`q_of`].
pub fn v_of(store: &ValueStore, graph: &MaxqGraph, node: NodeId, s: usize, params: &[usize]) -> Result<f64, DecompError> {
    if graph.node(node).is_primitive() {
        return store.leaf_value(graph, node, s);
    }
    if graph.terminated(node, s, params) {
        return Err(DecompError::NodeTerminated { node: graph.node(node).name.clone(), state: s });
    }
    let cs = child_values(store, graph, node, s, params)?;
    let c = &cs[greedy_index(graph, &cs)];
    Ok(c.value + store.completion(graph, c.edge, s, params)?)
}

/// `Q(node, s, j) = V(j, s) + C(node, s, j)` for edge `e = (node, j)`.
pub fn q_of(store: &ValueStore, graph: &MaxqGraph, e: EdgeId, s: usize, params: &[usize]) -> Result<f64, DecompError> {
    let cp = graph
        .child_params(e, s, params)
        .ok_or_else(|| DecompError::UnboundChild { edge: graph.edge(e).name.clone(), state: s })?;
    Ok(v_of(store, graph, graph.edge(e).child, s, &cp)? + store.completion(graph, e, s, params)?)
}

/// `Q~(node, s, j) = V(j, s) + C~(node, s, j)`.
pub fn q_tilde(store: &ValueStore, graph: &MaxqGraph, e: EdgeId, s: usize, params: &[usize]) -> Result<f64, DecompError> {
    let cp = graph
        .child_params(e, s, params)
        .ok_or_else(|| DecompError::UnboundChild { edge: graph.edge(e).name.clone(), state: s })?;
    Ok(v_of(store, graph, graph.edge(e).child, s, &cp)? + store.pseudo_completion(graph, e, s, params)?)
}

/// Result of the best-path search below a node.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxNodeEval {
    pub value: f64,
    pub primitive: NodeId,
    /// Model action of `primitive`.
    pub action: usize,
    /// Edges from the searched node down to the primitive, with child parameters.
    pub path: Vec<(EdgeId, Params)>,
}

/// Best path from `node` to a leaf by `leaf V + sum of C`, searching every
/// executable path. Shared subtasks are evaluated once per call.
pub fn evaluate_max_node(
    store: &ValueStore,
    graph: &MaxqGraph,
    node: NodeId,
    s: usize,
    params: &[usize],
) -> Result<MaxNodeEval, DecompError> {
    let mut cache = FxHashMap::default();
    evaluate_cached(store, graph, node, s, params, &mut cache)
}

fn evaluate_cached(
    store: &ValueStore,
    graph: &MaxqGraph,
    node: NodeId,
    s: usize,
    params: &[usize],
    cache: &mut FxHashMap<(NodeId, usize), MaxNodeEval>,
) -> Result<MaxNodeEval, DecompError> {
    if let Some(action) = graph.action_of(node) {
        return Ok(MaxNodeEval { value: store.leaf_value(graph, node, s)?, primitive: node, action, path: Vec::new() });
    }
    let memo = (node, graph.binding_index(node, params));
    if let Some(hit) = cache.get(&memo) {
        return Ok(hit.clone());
    }
    let mut options = Vec::new();
    for (e, cp) in executable_children(graph, node, s, params) {
        let below = evaluate_cached(store, graph, graph.edge(e).child, s, &cp, cache)?;
        let value = below.value + store.completion(graph, e, s, params)?;
        options.push((e, (cp, below), value));
    }
    let k = ordered_best(graph, &options)
        .ok_or_else(|| DecompError::NoExecutableChild { node: graph.node(node).name.clone(), state: s })?;
    let (e, (cp, below), value) = options.swap_remove(k);
    let mut path = Vec::with_capacity(below.path.len() + 1);
    path.push((e, cp));
    path.extend(below.path);
    let out = MaxNodeEval { value, primitive: below.primitive, action: below.action, path };
    cache.insert(memo, out.clone());
    Ok(out)
}

/// A hierarchical policy: one child per active (node, parameters, state).
pub trait HierarchicalPolicy {
    fn choose(&self, graph: &MaxqGraph, node: NodeId, s: usize, params: &[usize]) -> Result<(EdgeId, Params), DecompError>;
}

/// The policy that is greedy in `Q~` at every node.
#[derive(Debug, Clone, Copy)]
pub struct GreedyPolicy<'a>(pub &'a ValueStore);

impl HierarchicalPolicy for GreedyPolicy<'_> {
    fn choose(&self, graph: &MaxqGraph, node: NodeId, s: usize, params: &[usize]) -> Result<(EdgeId, Params), DecompError> {
        greedy_child(self.0, graph, node, s, params)
    }
}

/// A policy frozen into an explicit table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TablePolicy {
    choice: FxHashMap<(NodeId, usize, usize), EdgeId>,
}

impl TablePolicy {
    /// Records the choice of `policy` at every active (node, parameters, state).
    pub fn freeze(graph: &MaxqGraph, states: impl Iterator<Item = usize> + Clone, policy: &dyn HierarchicalPolicy) -> Result<Self, DecompError> {
        let mut out = Self::default();
        for node in graph.composites().collect::<Vec<_>>() {
            for b in graph.all_bindings(node) {
                for s in states.clone() {
                    if graph.terminated(node, s, &b) || executable_children(graph, node, s, &b).is_empty() {
                        continue;
                    }
                    let (e, _) = policy.choose(graph, node, s, &b)?;
                    out.set(graph, node, s, &b, e);
                }
            }
        }
        Ok(out)
    }

    pub fn set(&mut self, graph: &MaxqGraph, node: NodeId, s: usize, params: &[usize], e: EdgeId) {
        self.choice.insert((node, graph.binding_index(node, params), s), e);
    }

    pub fn get(&self, graph: &MaxqGraph, node: NodeId, s: usize, params: &[usize]) -> Option<EdgeId> {
        self.choice.get(&(node, graph.binding_index(node, params), s)).copied()
    }

    pub fn len(&self) -> usize {
        self.choice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choice.is_empty()
    }
}

impl HierarchicalPolicy for TablePolicy {
    fn choose(&self, graph: &MaxqGraph, node: NodeId, s: usize, params: &[usize]) -> Result<(EdgeId, Params), DecompError> {
        let e = self
            .get(graph, node, s, params)
            .ok_or_else(|| DecompError::NoPolicyEntry { node: graph.node(node).name.clone(), state: s })?;
        let cp = graph
            .executable(e, s, params)
            .ok_or_else(|| DecompError::UnboundChild { edge: graph.edge(e).name.clone(), state: s })?;
        Ok((e, cp))
    }
}

/// Path chosen by a policy from the root down to a leaf, with its value terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// Edges from the root down, with child parameters.
    pub path: Vec<(EdgeId, Params)>,
    pub leaf: NodeId,
    /// `[V(leaf), C(parent of leaf), ..., C(root)]`.
    pub terms: Vec<f64>,
}

impl Decomposition {
    /// Sum of the terms, accumulated leaf first.
    pub fn total(&self) -> f64 {
        self.terms.iter().fold(0.0, |acc, t| acc + t)
    }
}

/// Splits the root's value in `s` into the leaf reward and the completion
/// values along the path `policy` selects.
pub fn decompose_path(
    store: &ValueStore,
    graph: &MaxqGraph,
    s: usize,
    policy: &dyn HierarchicalPolicy,
) -> Result<Decomposition, DecompError> {
    let mut node = graph.root();
    let mut params = Params::new();
    let mut path = Vec::new();
    let mut completions = Vec::new();
    while !graph.node(node).is_primitive() {
        let (e, cp) = policy.choose(graph, node, s, &params)?;
        completions.push(store.completion(graph, e, s, &params)?);
        path.push((e, cp.clone()));
        node = graph.edge(e).child;
        params = cp;
    }
    let mut terms = vec![store.leaf_value(graph, node, s)?];
    terms.extend(completions.into_iter().rev());
    Ok(Decomposition { path, leaf: node, terms })
}
