use std::io::{Read, Write};

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::taskgraph::{edge_key, leaf_key, EdgeId, KeyMode, MaxqGraph, NodeId, NodeKind, Storage};

use super::DecompError;

/// Learnable tables of the decomposition: leaf rewards `V(a, x)`, completion
/// values `C(i, x, j)` and their pseudo-reward twins `C~(i, x, j)`, plus
/// optionally learned pseudo-rewards.
///
/// Missing entries read as the owning node's initial value. Edges stored as
/// zero read 0 and ignore writes.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueStore {
    mode: KeyMode,
    completion: Vec<FxHashMap<u64, f64>>,
    pseudo_completion: Vec<FxHashMap<u64, f64>>,
    leaf: Vec<FxHashMap<u64, f64>>,
    learned_pseudo: Option<Vec<FxHashMap<u64, f64>>>,
    initial: Vec<f64>,
    zero: Vec<bool>,
    /// Cardinalities needed to form node-level pseudo-reward keys.
    node_radix: Vec<Vec<(usize, usize)>>,
}

/// Which table of a store an entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Table {
    Completion,
    PseudoCompletion,
    Leaf,
    LearnedPseudo,
}

/// One serialized store entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub table: Table,
    /// Edge name for completion tables, node name otherwise.
    pub name: String,
    pub key: u64,
    pub value: f64,
}

impl ValueStore {
    pub fn new(graph: &MaxqGraph, mode: KeyMode) -> Self {
        let ne = graph.edges().len();
        let nn = graph.nodes().len();
        let zero = graph
            .edges()
            .iter()
            .map(|e| mode == KeyMode::Abstract && e.storage == Storage::Zero)
            .collect();
        let nvars = graph.space().vars().len();
        let node_radix = graph
            .nodes()
            .iter()
            .map(|n| {
                let mask = n.relevant_mask(nvars);
                (0..nvars).filter(|&v| mask[v]).map(|v| (v, graph.space().card(v))).collect()
            })
            .collect();
        Self {
            mode,
            completion: vec![FxHashMap::default(); ne],
            pseudo_completion: vec![FxHashMap::default(); ne],
            leaf: vec![FxHashMap::default(); nn],
            learned_pseudo: None,
            initial: vec![0.0; nn],
            zero,
            node_radix,
        }
    }

    /// Sets every node's initial value.
    pub fn with_initial(mut self, value: f64) -> Self {
        self.initial.iter_mut().for_each(|x| *x = value);
        self
    }

    /// Initial value of entries owned by `node` (its completion tables, or its leaf table).
    pub fn set_initial(&mut self, node: NodeId, value: f64) {
        self.initial[node] = value;
    }

    /// Enables learned pseudo-rewards, starting at 0.
    pub fn with_learned_pseudo(mut self) -> Self {
        self.learned_pseudo = Some(vec![FxHashMap::default(); self.leaf.len()]);
        self
    }

    pub fn mode(&self) -> KeyMode {
        self.mode
    }

    pub fn learns_pseudo(&self) -> bool {
        self.learned_pseudo.is_some()
    }

    fn key(&self, graph: &MaxqGraph, e: EdgeId, s: usize, params: &[usize]) -> Result<Option<u64>, DecompError> {
        if self.zero[e] {
            return Ok(None);
        }
        edge_key(graph, self.mode, e, s, params)
            .map(Some)
            .ok_or_else(|| DecompError::ShieldedRead { table: graph.edge(e).name.clone(), state: s })
    }

    fn read(&self, map: &FxHashMap<u64, f64>, graph: &MaxqGraph, e: EdgeId, s: usize, params: &[usize]) -> Result<f64, DecompError> {
        Ok(match self.key(graph, e, s, params)? {
            None => 0.0,
            Some(k) => map.get(&k).copied().unwrap_or(self.initial[graph.edge(e).parent]),
        })
    }

    /// `C(i, s, j)` for edge `e = (i, j)` under the parent's parameters.
    #[inline]
    pub fn completion(&self, graph: &MaxqGraph, e: EdgeId, s: usize, params: &[usize]) -> Result<f64, DecompError> {
        self.read(&self.completion[e], graph, e, s, params)
    }

    #[inline]
    pub fn pseudo_completion(&self, graph: &MaxqGraph, e: EdgeId, s: usize, params: &[usize]) -> Result<f64, DecompError> {
        self.read(&self.pseudo_completion[e], graph, e, s, params)
    }

    pub fn set_completion(&mut self, graph: &MaxqGraph, e: EdgeId, s: usize, params: &[usize], v: f64) -> Result<(), DecompError> {
        if let Some(k) = self.key(graph, e, s, params)? {
            self.completion[e].insert(k, v);
        }
        Ok(())
    }

    pub fn set_pseudo_completion(
        &mut self,
        graph: &MaxqGraph,
        e: EdgeId,
        s: usize,
        params: &[usize],
        v: f64,
    ) -> Result<(), DecompError> {
        if let Some(k) = self.key(graph, e, s, params)? {
            self.pseudo_completion[e].insert(k, v);
        }
        Ok(())
    }

    /// Moves both completion entries toward their targets with step `alpha`.
    #[allow(clippy::too_many_arguments)]
    pub fn blend_completion(
        &mut self,
        graph: &MaxqGraph,
        e: EdgeId,
        s: usize,
        params: &[usize],
        alpha: f64,
        target: f64,
        pseudo_target: f64,
    ) -> Result<(), DecompError> {
        let Some(k) = self.key(graph, e, s, params)? else { return Ok(()) };
        let init = self.initial[graph.edge(e).parent];
        let c = self.completion[e].entry(k).or_insert(init);
        *c = (1.0 - alpha) * *c + alpha * target;
        let ct = self.pseudo_completion[e].entry(k).or_insert(init);
        *ct = (1.0 - alpha) * *ct + alpha * pseudo_target;
        Ok(())
    }

    /// Expected (leaf-assigned) reward of primitive `leaf` in `s`.
    #[inline]
    pub fn leaf_value(&self, graph: &MaxqGraph, leaf: NodeId, s: usize) -> Result<f64, DecompError> {
        let k = leaf_key(graph, self.mode, leaf, s)
            .ok_or_else(|| DecompError::ShieldedRead { table: graph.node(leaf).name.clone(), state: s })?;
        Ok(self.leaf[leaf].get(&k).copied().unwrap_or(self.initial[leaf]))
    }

    pub fn set_leaf_value(&mut self, graph: &MaxqGraph, leaf: NodeId, s: usize, v: f64) -> Result<(), DecompError> {
        let k = leaf_key(graph, self.mode, leaf, s)
            .ok_or_else(|| DecompError::ShieldedRead { table: graph.node(leaf).name.clone(), state: s })?;
        self.leaf[leaf].insert(k, v);
        Ok(())
    }

    pub fn blend_leaf_value(&mut self, graph: &MaxqGraph, leaf: NodeId, s: usize, alpha: f64, r: f64) -> Result<(), DecompError> {
        let k = leaf_key(graph, self.mode, leaf, s)
            .ok_or_else(|| DecompError::ShieldedRead { table: graph.node(leaf).name.clone(), state: s })?;
        let init = self.initial[leaf];
        let v = self.leaf[leaf].entry(k).or_insert(init);
        *v = (1.0 - alpha) * *v + alpha * r;
        Ok(())
    }

    /// Key of a completion entry, `None` for edges stored as zero.
    pub fn completion_key(&self, graph: &MaxqGraph, e: EdgeId, s: usize, params: &[usize]) -> Result<Option<u64>, DecompError> {
        self.key(graph, e, s, params)
    }

    pub fn leaf_entry_key(&self, graph: &MaxqGraph, leaf: NodeId, s: usize) -> Result<u64, DecompError> {
        leaf_key(graph, self.mode, leaf, s)
            .ok_or_else(|| DecompError::ShieldedRead { table: graph.node(leaf).name.clone(), state: s })
    }

    /// Image of `(s, params)` at `node`: its relevant variables under
    /// abstraction, the full state otherwise, with the binding folded in.
    pub fn node_key(&self, graph: &MaxqGraph, node: NodeId, s: usize, params: &[usize]) -> u64 {
        let bi = graph.binding_index(node, params) as u64;
        let nb = graph.node(node).binding_count() as u64;
        let x = match self.mode {
            KeyMode::Full => s as u64,
            KeyMode::Abstract => self.node_radix[node]
                .iter()
                .fold(0u64, |acc, &(v, card)| acc * card as u64 + graph.space().value(s, v) as u64),
        };
        x * nb + bi
    }

    /// Pseudo-reward of ending `node` in `s`: learned if enabled, else the graph's.
    #[inline]
    pub fn pseudo_reward(&self, graph: &MaxqGraph, node: NodeId, s: usize, params: &[usize]) -> f64 {
        match &self.learned_pseudo {
            Some(maps) => {
                if graph.goal(node, s, params) {
                    0.0
                } else {
                    maps[node].get(&self.node_key(graph, node, s, params)).copied().unwrap_or(0.0)
                }
            }
            None => graph.pseudo_reward(node, s, params),
        }
    }

    /// Moves the learned pseudo-reward of ending `node` in `s` toward `target`.
    pub fn blend_pseudo_reward(&mut self, graph: &MaxqGraph, node: NodeId, s: usize, params: &[usize], alpha: f64, target: f64) {
        let key = self.node_key(graph, node, s, params);
        if let Some(maps) = &mut self.learned_pseudo {
            let r = maps[node].entry(key).or_insert(0.0);
            *r = (1.0 - alpha) * *r + alpha * target;
        }
    }

    /// Number of stored entries across the completion and leaf tables.
    pub fn len(&self) -> usize {
        self.completion.iter().map(|m| m.len()).sum::<usize>() + self.leaf.iter().map(|m| m.len()).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn completion_len(&self, e: EdgeId) -> usize {
        self.completion[e].len()
    }

    pub fn leaf_len(&self, leaf: NodeId) -> usize {
        self.leaf[leaf].len()
    }

    /// Touches every entry a sweep over all non-terminal states and parameter vectors can address.
    pub fn touch_all(&mut self, graph: &MaxqGraph, states: impl Iterator<Item = usize> + Clone) {
        for e in 0..graph.edges().len() {
            let init = self.initial[graph.edge(e).parent];
            for b in graph.all_bindings(graph.edge(e).parent) {
                for s in states.clone() {
                    if let Ok(Some(k)) = self.key(graph, e, s, &b) {
                        self.completion[e].entry(k).or_insert(init);
                    }
                }
            }
        }
        for leaf in graph.leaves().collect::<Vec<_>>() {
            for s in states.clone() {
                if let Some(k) = leaf_key(graph, self.mode, leaf, s) {
                    self.leaf[leaf].entry(k).or_insert(self.initial[leaf]);
                }
            }
        }
    }

    /// All entries in a stable order.
    pub fn entries(&self, graph: &MaxqGraph) -> Vec<Entry> {
        let mut out = Vec::new();
        let mut push = |table, name: &str, map: &FxHashMap<u64, f64>| {
            let mut keys: Vec<_> = map.iter().collect();
            keys.sort_by_key(|(k, _)| **k);
            out.extend(keys.into_iter().map(|(k, v)| Entry { table, name: name.to_string(), key: *k, value: *v }));
        };
        for (e, edge) in graph.edges().iter().enumerate() {
            push(Table::Completion, &edge.name, &self.completion[e]);
            push(Table::PseudoCompletion, &edge.name, &self.pseudo_completion[e]);
        }
        for (n, node) in graph.nodes().iter().enumerate() {
            if matches!(node.kind, NodeKind::Primitive { .. }) {
                push(Table::Leaf, &node.name, &self.leaf[n]);
            }
            if let Some(maps) = &self.learned_pseudo {
                push(Table::LearnedPseudo, &node.name, &maps[n]);
            }
        }
        out
    }

    /// Writes entries as CSV rows `table,name,key,value`.
    pub fn write_csv<W: Write>(&self, graph: &MaxqGraph, w: W) -> Result<(), DecompError> {
        let mut wr = csv::Writer::from_writer(w);
        for e in self.entries(graph) {
            wr.serialize(&e).map_err(|e| DecompError::Io(e.to_string()))?;
        }
        wr.flush().map_err(|e| DecompError::Io(e.to_string()))
    }

    /// Loads entries written by [`ValueStore::write_csv`] into this store.
    pub fn read_csv<R: Read>(&mut self, graph: &MaxqGraph, r: R) -> Result<(), DecompError> {
        let mut rd = csv::Reader::from_reader(r);
        for row in rd.deserialize::<Entry>() {
            let e = row.map_err(|e| DecompError::Io(e.to_string()))?;
            let unknown = || DecompError::Io(format!("unknown table {}", e.name));
            match e.table {
                Table::Completion | Table::PseudoCompletion => {
                    let id = graph.edge_id(&e.name).ok_or_else(unknown)?;
                    let map = if e.table == Table::Completion { &mut self.completion } else { &mut self.pseudo_completion };
                    map[id].insert(e.key, e.value);
                }
                Table::Leaf => {
                    let id = graph.node_id(&e.name).ok_or_else(unknown)?;
                    self.leaf[id].insert(e.key, e.value);
                }
                Table::LearnedPseudo => {
                    let id = graph.node_id(&e.name).ok_or_else(unknown)?;
                    let maps = self.learned_pseudo.get_or_insert_with(|| vec![FxHashMap::default(); graph.nodes().len()]);
                    maps[id].insert(e.key, e.value);
                }
            }
        }
        Ok(())
    }
}
