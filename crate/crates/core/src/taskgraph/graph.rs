use std::fmt;
use std::sync::Arc;

use arrayvec::ArrayVec;

use crate::mdp::StateSpace;

use super::GraphError;

pub type NodeId = usize;
pub type EdgeId = usize;

/// Most parameters any node may declare.
pub const MAX_PARAMS: usize = 4;

/// Bound parameter values of one node activation.
pub type Params = ArrayVec<usize, MAX_PARAMS>;

/// Pseudo-reward paid on non-goal terminal states unless configured otherwise.
pub const DEFAULT_PSEUDO_REWARD: f64 = -100.0;

pub type PredFn = Arc<dyn Fn(&StateSpace, usize, &[usize]) -> bool + Send + Sync>;
pub type FeatureFn = Arc<dyn Fn(&StateSpace, usize, &[usize]) -> Option<usize> + Send + Sync>;
pub type PseudoFn = Arc<dyn Fn(&StateSpace, usize, &[usize]) -> f64 + Send + Sync>;
/// Portion of the reward of `(s, a, s', r)` routed to a fixed node.
pub type SplitFn = Arc<dyn Fn(&StateSpace, usize, usize, usize, f64) -> f64 + Send + Sync>;

/// A named predicate over (state, bound parameters).
#[derive(Clone)]
pub struct Predicate {
    pub name: String,
    pub eval: PredFn,
}

impl Predicate {
    pub fn new(name: impl Into<String>, f: impl Fn(&StateSpace, usize, &[usize]) -> bool + Send + Sync + 'static) -> Self {
        Self { name: name.into(), eval: Arc::new(f) }
    }
}

impl fmt::Debug for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Predicate({})", self.name)
    }
}

/// A derived, possibly partial, discrete feature of (state, parameters).
///
/// `reads` lists the state variables the function looks at; the safety
/// checker uses it to decide which variables an abstraction keeps.
#[derive(Clone)]
pub struct DerivedFeature {
    pub name: String,
    pub card: usize,
    pub reads: Vec<usize>,
    pub eval: FeatureFn,
}

impl fmt::Debug for DerivedFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DerivedFeature({}, card {})", self.name, self.card)
    }
}

/// One component of an abstraction key or a binding expression.
#[derive(Debug, Clone)]
pub enum Feature {
    Var(usize),
    Param(usize),
    Const(usize),
    Derived(DerivedFeature),
}

impl Feature {
    #[inline]
    pub fn eval(&self, space: &StateSpace, s: usize, params: &[usize]) -> Option<usize> {
        match self {
            Feature::Var(v) => Some(space.value(s, *v)),
            Feature::Param(p) => params.get(*p).copied(),
            Feature::Const(c) => Some(*c),
            Feature::Derived(d) => (d.eval)(space, s, params),
        }
    }

    /// Number of distinct values; `param_cards` belong to the owning node.
    pub fn card(&self, space: &StateSpace, param_cards: &[usize]) -> usize {
        match self {
            Feature::Var(v) => space.card(*v),
            Feature::Param(p) => param_cards[*p],
            Feature::Const(_) => 1,
            Feature::Derived(d) => d.card,
        }
    }

    /// State variables this feature depends on.
    pub fn reads(&self) -> Vec<usize> {
        match self {
            Feature::Var(v) => vec![*v],
            Feature::Derived(d) => d.reads.clone(),
            Feature::Param(_) | Feature::Const(_) => Vec::new(),
        }
    }

    pub fn label(&self, space: &StateSpace, params: &[Param]) -> String {
        match self {
            Feature::Var(v) => space.vars()[*v].name.clone(),
            Feature::Param(p) => params[*p].name.clone(),
            Feature::Const(c) => c.to_string(),
            Feature::Derived(d) => d.name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub card: usize,
}

#[derive(Clone)]
pub enum PseudoReward {
    /// 0 on goal states, the constant on other terminal states.
    Constant(f64),
    Func { name: String, eval: PseudoFn },
}

impl fmt::Debug for PseudoReward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PseudoReward::Constant(c) => write!(f, "Constant({c})"),
            PseudoReward::Func { name, .. } => write!(f, "Func({name})"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum NodeKind {
    Primitive { action: usize, key: Vec<Feature> },
    Composite { terminate: Predicate, goal: Predicate, pseudo: PseudoReward, children: Vec<EdgeId> },
}

#[derive(Debug, Clone)]
pub struct Node {
    pub name: String,
    pub params: Vec<Param>,
    pub kind: NodeKind,
    /// State variables the node's own values may depend on; `None` means all.
    pub relevant: Option<Vec<usize>>,
}

impl Node {
    pub fn is_primitive(&self) -> bool {
        matches!(self.kind, NodeKind::Primitive { .. })
    }

    pub fn children(&self) -> &[EdgeId] {
        match &self.kind {
            NodeKind::Composite { children, .. } => children,
            NodeKind::Primitive { .. } => &[],
        }
    }

    pub fn param_cards(&self) -> Vec<usize> {
        self.params.iter().map(|p| p.card).collect()
    }

    /// Relevant variables as a mask over the state space's variables.
    pub fn relevant_mask(&self, num_vars: usize) -> Vec<bool> {
        match &self.relevant {
            None => vec![true; num_vars],
            Some(vs) => (0..num_vars).map(|v| vs.contains(&v)).collect(),
        }
    }

    /// Number of distinct parameter vectors.
    pub fn binding_count(&self) -> usize {
        self.params.iter().map(|p| p.card).product()
    }
}

/// How completion values of an edge are stored under abstraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Storage {
    Table,
    /// The child always ends the parent in a goal state; C is identically 0.
    Zero,
}

/// A Q node: the parent's option of invoking a child with bound parameters.
#[derive(Debug, Clone)]
pub struct Edge {
    pub name: String,
    pub parent: NodeId,
    pub child: NodeId,
    /// One expression per child parameter, evaluated in the parent's context.
    pub bind: Vec<Feature>,
    /// Abstraction key features, evaluated in the parent's context.
    pub key: Vec<Feature>,
    pub storage: Storage,
}

/// Routing of primitive-reward components to graph nodes.
#[derive(Clone, Default)]
pub struct RewardSplit {
    pub parts: Vec<(NodeId, String, SplitFn)>,
}

impl fmt::Debug for RewardSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.parts.iter().map(|(n, name, _)| (n, name))).finish()
    }
}

impl RewardSplit {
    /// Amount routed to each target node; the leaf keeps the rest.
    pub fn route(&self, space: &StateSpace, s: usize, a: usize, next: usize, r: f64) -> ArrayVec<(NodeId, f64), 4> {
        self.parts
            .iter()
            .map(|(node, _, f)| (*node, f(space, s, a, next, r)))
            .filter(|&(_, x)| x != 0.0)
            .collect()
    }

    pub fn leaf_part(&self, space: &StateSpace, s: usize, a: usize, next: usize, r: f64) -> f64 {
        r - self.parts.iter().map(|(_, _, f)| f(space, s, a, next, r)).sum::<f64>()
    }
}

/// A MAXQ task graph bound to one state space.
#[derive(Debug, Clone)]
pub struct MaxqGraph {
    pub(crate) space: StateSpace,
    pub(crate) nodes: Vec<Node>,
    pub(crate) edges: Vec<Edge>,
    pub(crate) root: NodeId,
    pub(crate) edge_rank: Vec<usize>,
    pub(crate) split: Option<RewardSplit>,
}

impl MaxqGraph {
    pub fn new(space: StateSpace, nodes: Vec<Node>, edges: Vec<Edge>, root: NodeId) -> Result<Self, GraphError> {
        let mut g = Self { space, nodes, edges, root, edge_rank: Vec::new(), split: None };
        g.check_structure()?;
        g.edge_rank = g.depth_first_edges().iter().enumerate().fold(vec![0; g.edges.len()], |mut r, (k, &e)| {
            r[e] = k;
            r
        });
        Ok(g)
    }

    fn check_structure(&self) -> Result<(), GraphError> {
        if self.root >= self.nodes.len() || self.nodes[self.root].is_primitive() {
            return Err(GraphError::Invalid("root must be a composite node".into()));
        }
        if !self.nodes[self.root].params.is_empty() {
            return Err(GraphError::Invalid("root must not take parameters".into()));
        }
        for n in &self.nodes {
            if n.params.len() > MAX_PARAMS {
                return Err(GraphError::Invalid(format!("{} has more than {MAX_PARAMS} parameters", n.name)));
            }
            if n.is_primitive() && !n.params.is_empty() {
                return Err(GraphError::Invalid(format!("primitive {} cannot take parameters", n.name)));
            }
            if !n.is_primitive() && n.children().is_empty() {
                return Err(GraphError::Invalid(format!("{} has no children", n.name)));
            }
        }
        for (k, e) in self.edges.iter().enumerate() {
            if e.parent >= self.nodes.len() || e.child >= self.nodes.len() {
                return Err(GraphError::Invalid(format!("edge {} references a missing node", e.name)));
            }
            if !self.nodes[e.parent].children().contains(&k) {
                return Err(GraphError::Invalid(format!("edge {} not listed by its parent", e.name)));
            }
            if e.bind.len() != self.nodes[e.child].params.len() {
                return Err(GraphError::Invalid(format!(
                    "edge {} binds {} of {} parameters",
                    e.name,
                    e.bind.len(),
                    self.nodes[e.child].params.len()
                )));
            }
        }
        if let Some(cycle) = self.find_cycle() {
            return Err(GraphError::Cyclic(cycle));
        }
        Ok(())
    }

    /// Names along a cycle, if the child relation has one.
    pub fn find_cycle(&self) -> Option<Vec<String>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Open,
            Done,
        }
        fn visit(g: &MaxqGraph, n: NodeId, mark: &mut [Mark], path: &mut Vec<NodeId>) -> Option<Vec<String>> {
            mark[n] = Mark::Open;
            path.push(n);
            for &e in g.nodes[n].children() {
                let c = g.edges[e].child;
                match mark[c] {
                    Mark::Open => {
                        let start = path.iter().position(|&x| x == c).unwrap_or(0);
                        let mut names: Vec<String> = path[start..].iter().map(|&x| g.nodes[x].name.clone()).collect();
                        names.push(g.nodes[c].name.clone());
                        return Some(names);
                    }
                    Mark::New => {
                        if let Some(c) = visit(g, c, mark, path) {
                            return Some(c);
                        }
                    }
                    Mark::Done => {}
                }
            }
            path.pop();
            mark[n] = Mark::Done;
            None
        }
        let mut mark = vec![Mark::New; self.nodes.len()];
        (0..self.nodes.len()).find_map(|n| if mark[n] == Mark::New { visit(self, n, &mut mark, &mut Vec::new()) } else { None })
    }

    fn depth_first_edges(&self) -> Vec<EdgeId> {
        let mut out = Vec::new();
        let mut seen = vec![false; self.edges.len()];
        fn walk(g: &MaxqGraph, n: NodeId, out: &mut Vec<EdgeId>, seen: &mut [bool]) {
            for &e in g.nodes[n].children() {
                if !seen[e] {
                    seen[e] = true;
                    out.push(e);
                    walk(g, g.edges[e].child, out, seen);
                }
            }
        }
        walk(self, self.root, &mut out, &mut seen);
        for e in 0..self.edges.len() {
            if !seen[e] {
                out.push(e);
            }
        }
        out
    }

    pub fn with_split(mut self, split: RewardSplit) -> Self {
        self.split = Some(split);
        self
    }

    pub fn without_split(mut self) -> Self {
        self.split = None;
        self
    }

    pub fn split(&self) -> Option<&RewardSplit> {
        self.split.as_ref()
    }

    /// Replaces the default depth-first order; `order` lists every edge once.
    pub fn set_order(&mut self, order: &[EdgeId]) -> Result<(), GraphError> {
        let mut rank = vec![usize::MAX; self.edges.len()];
        for (k, &e) in order.iter().enumerate() {
            if e >= rank.len() || rank[e] != usize::MAX {
                return Err(GraphError::Invalid("edge order is not a permutation".into()));
            }
            rank[e] = k;
        }
        if rank.contains(&usize::MAX) {
            return Err(GraphError::Invalid("edge order is not a permutation".into()));
        }
        self.edge_rank = rank;
        Ok(())
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, n: NodeId) -> &Node {
        &self.nodes[n]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e]
    }

    pub fn edge_rank(&self, e: EdgeId) -> usize {
        self.edge_rank[e]
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn edge_id(&self, name: &str) -> Option<EdgeId> {
        self.edges.iter().position(|e| e.name == name)
    }

    /// Primitive leaves in declaration order.
    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&n| self.nodes[n].is_primitive())
    }

    pub fn composites(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&n| !self.nodes[n].is_primitive())
    }

    /// Model action executed by a primitive node.
    pub fn action_of(&self, n: NodeId) -> Option<usize> {
        match &self.nodes[n].kind {
            NodeKind::Primitive { action, .. } => Some(*action),
            NodeKind::Composite { .. } => None,
        }
    }

    /// Composite nodes in an order where every node precedes its parents.
    pub fn bottom_up(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut seen = vec![false; self.nodes.len()];
        fn post(g: &MaxqGraph, n: NodeId, seen: &mut [bool], out: &mut Vec<NodeId>) {
            if seen[n] {
                return;
            }
            seen[n] = true;
            for &e in g.nodes[n].children() {
                post(g, g.edges[e].child, seen, out);
            }
            if !g.nodes[n].is_primitive() {
                out.push(n);
            }
        }
        for n in 0..self.nodes.len() {
            post(self, n, &mut seen, &mut out);
        }
        out
    }

    /// All nodes reachable from `n`, including `n`.
    pub fn subtree(&self, n: NodeId) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![n];
        seen[n] = true;
        while let Some(x) = stack.pop() {
            for &e in self.nodes[x].children() {
                let c = self.edges[e].child;
                if !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        (0..self.nodes.len()).filter(|&k| seen[k]).collect()
    }

    pub fn parents_of(&self, n: NodeId) -> Vec<EdgeId> {
        (0..self.edges.len()).filter(|&e| self.edges[e].child == n).collect()
    }

    /// Longest root-to-leaf path, counted in nodes.
    pub fn depth(&self) -> usize {
        fn d(g: &MaxqGraph, n: NodeId) -> usize {
            1 + g.nodes[n].children().iter().map(|&e| d(g, g.edges[e].child)).max().unwrap_or(0)
        }
        d(self, self.root)
    }

    /// Every parameter vector of node `n`, in mixed-radix order.
    pub fn all_bindings(&self, n: NodeId) -> Vec<Params> {
        let cards = self.nodes[n].param_cards();
        let total: usize = cards.iter().product();
        (0..total)
            .map(|mut k| {
                let mut p: Params = cards.iter().map(|_| 0).collect();
                for i in (0..cards.len()).rev() {
                    p[i] = k % cards[i];
                    k /= cards[i];
                }
                p
            })
            .collect()
    }

    /// Mixed-radix index of a parameter vector of node `n`.
    pub fn binding_index(&self, n: NodeId, params: &[usize]) -> usize {
        self.nodes[n].params.iter().zip(params).fold(0, |acc, (p, &v)| acc * p.card + v)
    }

    #[inline]
    pub fn terminated(&self, n: NodeId, s: usize, params: &[usize]) -> bool {
        match &self.nodes[n].kind {
            NodeKind::Composite { terminate, .. } => (terminate.eval)(&self.space, s, params),
            NodeKind::Primitive { .. } => false,
        }
    }

    #[inline]
    pub fn goal(&self, n: NodeId, s: usize, params: &[usize]) -> bool {
        match &self.nodes[n].kind {
            NodeKind::Composite { goal, .. } => (goal.eval)(&self.space, s, params),
            NodeKind::Primitive { .. } => false,
        }
    }

    /// Pseudo-reward of ending node `n` in `s`; only meaningful on terminal states.
    pub fn pseudo_reward(&self, n: NodeId, s: usize, params: &[usize]) -> f64 {
        match &self.nodes[n].kind {
            NodeKind::Composite { goal, pseudo, terminate, .. } => {
                if (goal.eval)(&self.space, s, params) || !(terminate.eval)(&self.space, s, params) {
                    return 0.0;
                }
                match pseudo {
                    PseudoReward::Constant(c) => *c,
                    PseudoReward::Func { eval, .. } => eval(&self.space, s, params),
                }
            }
            NodeKind::Primitive { .. } => 0.0,
        }
    }

    /// True if some non-goal terminal state carries a nonzero pseudo-reward.
    pub fn has_pseudo_rewards(&self) -> bool {
        self.composites().any(|n| {
            self.all_bindings(n)
                .iter()
                .any(|b| (0..self.space.len()).any(|s| self.pseudo_reward(n, s, b) != 0.0))
        })
    }

    /// Parameters passed to the child of edge `e`, or `None` if a binding is undefined.
    #[inline]
    pub fn child_params(&self, e: EdgeId, s: usize, params: &[usize]) -> Option<Params> {
        let edge = &self.edges[e];
        let mut out = Params::new();
        for (k, f) in edge.bind.iter().enumerate() {
            let v = f.eval(&self.space, s, params)?;
            if v >= self.nodes[edge.child].params[k].card {
                return None;
            }
            out.push(v);
        }
        Some(out)
    }

    /// Child parameters if edge `e` can be invoked in `s`.
    #[inline]
    pub fn executable(&self, e: EdgeId, s: usize, params: &[usize]) -> Option<Params> {
        let cp = self.child_params(e, s, params)?;
        if self.terminated(self.edges[e].child, s, &cp) {
            None
        } else {
            Some(cp)
        }
    }

    pub fn describe_edge(&self, e: EdgeId) -> String {
        let edge = &self.edges[e];
        format!("{} ({} -> {})", edge.name, self.nodes[edge.parent].name, self.nodes[edge.child].name)
    }
}
