//! Task graphs: definition, text format, validation, abstraction-safety
//! checks and storage accounting.

mod format;
mod graph;
mod safety;
mod storage;
mod validate;

pub use format::{parse_graph, Registry};
pub use graph::{
    DerivedFeature, Edge, EdgeId, Feature, MaxqGraph, Node, NodeId, NodeKind, Param, Params, Predicate, PseudoReward,
    RewardSplit, SplitFn, Storage, DEFAULT_PSEUDO_REWARD, MAX_PARAMS,
};
pub use safety::{check_abstraction_safety, Condition, SafetyEntry, SafetyReport, Subject, Verdict};
pub use storage::{edge_key, flat_q_count, leaf_key, storage_count, KeyMode, StorageItem, StorageReport};
pub use validate::{validate_description, validate_graph, ActiveSets, Check, ValidationReport};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("cannot parse graph description: {0}")]
    Parse(String),
    #[error("unresolved reference: {0}")]
    Unresolved(String),
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("task graph has a cycle: {}", .0.join(" -> "))]
    Cyclic(Vec<String>),
}
