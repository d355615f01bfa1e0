//! Declarative task-graph descriptions.
//!
//! A graph is written as TOML. Predicates, derived features, pseudo-reward
//! functions and reward-split functions are referenced by name and resolved
//! against a [`Registry`] supplied by the environment.
//!
//! ```toml
//! root = "Root"
//!
//! [split]                      # optional: node = split function
//! Root = "fuel_penalty"
//!
//! [[node]]
//! name = "Navigate"
//! params = [{ name = "t", card = 4 }]
//! terminate = "taxi_at_target" # registered predicate
//! goal = "taxi_at_target"      # optional, defaults to `terminate`
//! pseudo_reward = -100.0       # optional: number or registered function name
//! relevant = ["taxi"]          # optional: variables the node depends on, default all
//!
//! [[node.child]]
//! name = "QNorth"              # edge (Q node) name, unique in the graph
//! task = "North"               # child node
//! key = ["taxi", "t"]          # abstraction key features
//! bind = { }                   # child parameter = feature expression
//! store = "table"              # or "zero" for edges whose completion is 0
//!
//! [[leaf]]
//! name = "North"
//! action = "north"             # model action name, defaults to `name`
//! key = []
//! ```
//!
//! Feature names resolve in this order: a parameter of the owning node, a
//! state variable, a registered derived feature, then a decimal integer
//! constant.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::Deserialize;

use crate::mdp::{StateSpace, TabularModel};

use super::graph::*;
use super::GraphError;

/// Named functions a graph description may refer to.
#[derive(Clone, Default)]
pub struct Registry {
    preds: HashMap<String, Predicate>,
    features: HashMap<String, DerivedFeature>,
    pseudo: HashMap<String, PseudoFn>,
    splits: HashMap<String, SplitFn>,
}

impl Registry {
    /// A registry holding `env_terminal`, `always` and `never`.
    pub fn with_builtins(model: &TabularModel) -> Self {
        let mut r = Self::default();
        let terminal: Arc<Vec<bool>> = Arc::new((0..model.num_states()).map(|s| model.is_terminal(s)).collect());
        r.predicate("env_terminal", move |_, s, _| terminal[s]);
        r.predicate("always", |_, _, _| true);
        r.predicate("never", |_, _, _| false);
        r
    }

    pub fn predicate(
        &mut self,
        name: &str,
        f: impl Fn(&StateSpace, usize, &[usize]) -> bool + Send + Sync + 'static,
    ) -> &mut Self {
        self.preds.insert(name.into(), Predicate::new(name, f));
        self
    }

    pub fn feature(
        &mut self,
        name: &str,
        card: usize,
        reads: Vec<usize>,
        f: impl Fn(&StateSpace, usize, &[usize]) -> Option<usize> + Send + Sync + 'static,
    ) -> &mut Self {
        self.features.insert(name.into(), DerivedFeature { name: name.into(), card, reads, eval: Arc::new(f) });
        self
    }

    pub fn pseudo_reward(
        &mut self,
        name: &str,
        f: impl Fn(&StateSpace, usize, &[usize]) -> f64 + Send + Sync + 'static,
    ) -> &mut Self {
        self.pseudo.insert(name.into(), Arc::new(f));
        self
    }

    pub fn split(
        &mut self,
        name: &str,
        f: impl Fn(&StateSpace, usize, usize, usize, f64) -> f64 + Send + Sync + 'static,
    ) -> &mut Self {
        self.splits.insert(name.into(), Arc::new(f));
        self
    }

    pub fn get_predicate(&self, name: &str) -> Option<&Predicate> {
        self.preds.get(name)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    root: String,
    #[serde(default)]
    split: BTreeMap<String, String>,
    #[serde(default)]
    node: Vec<NodeDoc>,
    #[serde(default)]
    leaf: Vec<LeafDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamDoc {
    name: String,
    card: usize,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PseudoDoc {
    Constant(f64),
    Named(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    name: String,
    #[serde(default)]
    params: Vec<ParamDoc>,
    terminate: String,
    goal: Option<String>,
    pseudo_reward: Option<PseudoDoc>,
    relevant: Option<Vec<String>>,
    #[serde(default)]
    child: Vec<ChildDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChildDoc {
    name: String,
    task: String,
    #[serde(default)]
    key: Vec<String>,
    #[serde(default)]
    bind: BTreeMap<String, String>,
    #[serde(default)]
    store: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LeafDoc {
    name: String,
    action: Option<String>,
    #[serde(default)]
    key: Vec<String>,
}

fn resolve_feature(
    name: &str,
    params: &[Param],
    space: &StateSpace,
    reg: &Registry,
) -> Result<Feature, GraphError> {
    if let Some(p) = params.iter().position(|p| p.name == name) {
        return Ok(Feature::Param(p));
    }
    if let Some(v) = space.var_index(name) {
        return Ok(Feature::Var(v));
    }
    if let Some(d) = reg.features.get(name) {
        return Ok(Feature::Derived(d.clone()));
    }
    name.parse::<usize>()
        .map(Feature::Const)
        .map_err(|_| GraphError::Unresolved(format!("feature `{name}`")))
}

fn resolve_pred(name: &str, reg: &Registry) -> Result<Predicate, GraphError> {
    reg.preds.get(name).cloned().ok_or_else(|| GraphError::Unresolved(format!("predicate `{name}`")))
}

/// Parses a graph description against `model`'s state space and actions.
pub fn parse_graph(text: &str, model: &TabularModel, reg: &Registry) -> Result<MaxqGraph, GraphError> {
    let doc: GraphDoc = toml::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
    let space = model.space();

    let mut ids: HashMap<&str, NodeId> = HashMap::new();
    for (k, name) in doc.node.iter().map(|n| n.name.as_str()).chain(doc.leaf.iter().map(|l| l.name.as_str())).enumerate() {
        if ids.insert(name, k).is_some() {
            return Err(GraphError::Invalid(format!("duplicate node `{name}`")));
        }
    }

    let node_params: Vec<Vec<Param>> = doc
        .node
        .iter()
        .map(|n| n.params.iter().map(|p| Param { name: p.name.clone(), card: p.card }).collect())
        .chain(doc.leaf.iter().map(|_| Vec::new()))
        .collect();

    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for (k, nd) in doc.node.iter().enumerate() {
        let params = &node_params[k];
        let mut children = Vec::new();
        for cd in &nd.child {
            let child = *ids
                .get(cd.task.as_str())
                .ok_or_else(|| GraphError::Unresolved(format!("task `{}` under {}", cd.task, nd.name)))?;
            let child_params = &node_params[child];
            let mut bind = Vec::new();
            for p in child_params {
                let expr = cd
                    .bind
                    .get(&p.name)
                    .ok_or_else(|| GraphError::Invalid(format!("{} does not bind `{}`", cd.name, p.name)))?;
                bind.push(resolve_feature(expr, params, space, reg)?);
            }
            if let Some(extra) = cd.bind.keys().find(|b| !child_params.iter().any(|p| &p.name == *b)) {
                return Err(GraphError::Invalid(format!("{} binds unknown parameter `{extra}`", cd.name)));
            }
            let key = cd.key.iter().map(|f| resolve_feature(f, params, space, reg)).collect::<Result<_, _>>()?;
            let storage = match cd.store.as_deref() {
                None | Some("table") => Storage::Table,
                Some("zero") => Storage::Zero,
                Some(other) => return Err(GraphError::Invalid(format!("unknown store kind `{other}`"))),
            };
            children.push(edges.len());
            edges.push(Edge { name: cd.name.clone(), parent: k, child, bind, key, storage });
        }
        let terminate = resolve_pred(&nd.terminate, reg)?;
        let goal = resolve_pred(nd.goal.as_deref().unwrap_or(&nd.terminate), reg)?;
        let pseudo = match &nd.pseudo_reward {
            None => PseudoReward::Constant(DEFAULT_PSEUDO_REWARD),
            Some(PseudoDoc::Constant(c)) => PseudoReward::Constant(*c),
            Some(PseudoDoc::Named(name)) => PseudoReward::Func {
                name: name.clone(),
                eval: reg
                    .pseudo
                    .get(name)
                    .cloned()
                    .ok_or_else(|| GraphError::Unresolved(format!("pseudo-reward `{name}`")))?,
            },
        };
        let relevant = match &nd.relevant {
            None => None,
            Some(names) => {
                let mut vars = Vec::new();
                for f in names {
                    for v in resolve_feature(f, params, space, reg)?.reads() {
                        if !vars.contains(&v) {
                            vars.push(v);
                        }
                    }
                }
                vars.sort_unstable();
                Some(vars)
            }
        };
        nodes.push(Node {
            name: nd.name.clone(),
            params: params.clone(),
            kind: NodeKind::Composite { terminate, goal, pseudo, children },
            relevant,
        });
    }
    for ld in &doc.leaf {
        let action_name = ld.action.as_deref().unwrap_or(&ld.name);
        let action = model
            .action_index(action_name)
            .ok_or_else(|| GraphError::Unresolved(format!("action `{action_name}`")))?;
        let key = ld.key.iter().map(|f| resolve_feature(f, &[], space, reg)).collect::<Result<_, _>>()?;
        nodes.push(Node {
            name: ld.name.clone(),
            params: Vec::new(),
            kind: NodeKind::Primitive { action, key },
            relevant: None,
        });
    }

    let root = *ids.get(doc.root.as_str()).ok_or_else(|| GraphError::Unresolved(format!("root `{}`", doc.root)))?;
    let mut graph = MaxqGraph::new(space.clone(), nodes, edges, root)?;
    if !doc.split.is_empty() {
        let mut split = RewardSplit::default();
        for (node, fname) in &doc.split {
            let n = *ids.get(node.as_str()).ok_or_else(|| GraphError::Unresolved(format!("split target `{node}`")))?;
            let f = reg.splits.get(fname).cloned().ok_or_else(|| GraphError::Unresolved(format!("split `{fname}`")))?;
            split.parts.push((n, fname.clone(), f));
        }
        graph = graph.with_split(split);
    }
    Ok(graph)
}
