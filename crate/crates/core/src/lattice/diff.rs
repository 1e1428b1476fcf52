use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use similar::TextDiff;

use super::{serialize_snapshot, Lattice};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StructuralDiff {
    pub text: String,
    pub changed_nodes: Vec<String>,
}

impl StructuralDiff {
    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }
}

/// Unified diff (one line of context) between the snapshot serializations,
/// plus the sorted names of nodes whose serialized block differs.
pub fn structural_diff(old: &Lattice, new: &Lattice) -> StructuralDiff {
    let a = serialize_snapshot(old);
    let b = serialize_snapshot(new);
    if a == b {
        return StructuralDiff::default();
    }
    let text = TextDiff::from_lines(&a, &b)
        .unified_diff()
        .context_radius(1)
        .header("previous", "mutated")
        .to_string();

    let names: BTreeSet<&String> = old.nodes.keys().chain(new.nodes.keys()).collect();
    let changed_nodes = names
        .into_iter()
        .filter(|n| old.node_block(n) != new.node_block(n))
        .cloned()
        .collect();
    StructuralDiff { text, changed_nodes }
}
