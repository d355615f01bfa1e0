use std::fmt;

use rustc_hash::FxHashSet;

use crate::mdp::TabularModel;

use super::graph::*;
use super::validate::ActiveSets;

/// How table keys are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyMode {
    /// One entry per full state (and parameter vector).
    Full,
    /// Keys built from the declared abstraction features.
    Abstract,
}

fn pack(features: &[Feature], graph: &MaxqGraph, param_cards: &[usize], s: usize, params: &[usize]) -> Option<u64> {
    let sp = graph.space();
    let mut key = 0u64;
    for f in features {
        let card = f.card(sp, param_cards);
        let v = f.eval(sp, s, params)?;
        debug_assert!(v < card, "feature value {v} out of range {card}");
        key = key * card as u64 + v as u64;
    }
    Some(key)
}

/// Table key of edge `e` in `(s, params)`; `None` if no entry is stored there.
#[inline]
pub fn edge_key(graph: &MaxqGraph, mode: KeyMode, e: EdgeId, s: usize, params: &[usize]) -> Option<u64> {
    let edge = graph.edge(e);
    match mode {
        KeyMode::Full => {
            let n = graph.node(edge.parent).binding_count() as u64;
            Some(s as u64 * n + graph.binding_index(edge.parent, params) as u64)
        }
        KeyMode::Abstract => match edge.storage {
            Storage::Zero => None,
            Storage::Table => pack(&edge.key, graph, &graph.node(edge.parent).param_cards(), s, params),
        },
    }
}

/// Table key of a primitive leaf in `s`.
#[inline]
pub fn leaf_key(graph: &MaxqGraph, mode: KeyMode, leaf: NodeId, s: usize) -> Option<u64> {
    match mode {
        KeyMode::Full => Some(s as u64),
        KeyMode::Abstract => match &graph.node(leaf).kind {
            NodeKind::Primitive { key, .. } => pack(key, graph, &[], s, &[]),
            NodeKind::Composite { .. } => None,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StorageItem {
    pub name: String,
    pub owner: String,
    /// Distinct keys over all non-terminal states and parameter vectors.
    pub entries: usize,
    /// Distinct keys over states where the entry can actually be consulted.
    pub live: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StorageReport {
    pub mode: KeyMode,
    pub items: Vec<StorageItem>,
}

impl StorageReport {
    pub fn total(&self) -> usize {
        self.items.iter().map(|i| i.entries).sum()
    }

    pub fn live_total(&self) -> usize {
        self.items.iter().map(|i| i.live).sum()
    }

    pub fn entries_of(&self, name: &str) -> Option<usize> {
        self.items.iter().find(|i| i.name == name).map(|i| i.entries)
    }
}

impl fmt::Display for StorageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24} {:<16} {:>10} {:>10}", "table", "owner", "entries", "live")?;
        for i in &self.items {
            writeln!(f, "{:<24} {:<16} {:>10} {:>10}", i.name, i.owner, i.entries, i.live)?;
        }
        write!(f, "{:<24} {:<16} {:>10} {:>10}", "total", "", self.total(), self.live_total())
    }
}

/// Counts completion and leaf-reward entries by sweeping every non-terminal state.
///
/// Edges stored as zero and keys undefined by a partial feature hold no
/// entry. The `live` column restricts the sweep to states where the parent
/// is active and the child can be invoked.
pub fn storage_count(graph: &MaxqGraph, model: &TabularModel, mode: KeyMode) -> StorageReport {
    let active = ActiveSets::compute(graph, model);
    let states: Vec<usize> = (0..model.num_states()).filter(|&s| !model.is_terminal(s)).collect();
    let mut items = Vec::new();
    for (e, edge) in graph.edges().iter().enumerate() {
        let mut all = FxHashSet::default();
        let mut live = FxHashSet::default();
        for b in graph.all_bindings(edge.parent) {
            for &s in &states {
                if let Some(k) = edge_key(graph, mode, e, s, &b) {
                    all.insert(k);
                    if active.is_active(graph, edge.parent, &b, s) && graph.executable(e, s, &b).is_some() {
                        live.insert(k);
                    }
                }
            }
        }
        items.push(StorageItem {
            name: edge.name.clone(),
            owner: graph.node(edge.parent).name.clone(),
            entries: all.len(),
            live: live.len(),
        });
    }
    for leaf in graph.leaves() {
        let mut all = FxHashSet::default();
        let mut live = FxHashSet::default();
        for &s in &states {
            if let Some(k) = leaf_key(graph, mode, leaf, s) {
                all.insert(k);
                if active.any_active(leaf, s) {
                    live.insert(k);
                }
            }
        }
        let name = graph.node(leaf).name.clone();
        items.push(StorageItem { owner: name.clone(), name, entries: all.len(), live: live.len() });
    }
    StorageReport { mode, items }
}

/// Entries of a flat Q table over the non-terminal states.
pub fn flat_q_count(model: &TabularModel) -> usize {
    (0..model.num_states()).filter(|&s| !model.is_terminal(s)).count() * model.num_actions()
}
