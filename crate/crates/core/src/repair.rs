//! Deterministic structural repair.
//!
//! Passes, repeated to a fixpoint: drop alternatives that reference `output`;
//! drop alternatives with unresolved parameters; break cycles by removing the
//! youngest alternative on a cycle edge (ties: greatest node name, then
//! greatest index); drop empty nodes. Afterwards nodes unreachable from
//! `output` are dropped, and the result fails if `output` is gone or empty.
//!
//! Malformed or duplicate names, which only hand-built lattices can contain,
//! are dropped before the first pass.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{is_valid_name, reachable_from_output, strongly_connected, Lattice, OUTPUT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairReason {
    InvalidName,
    DuplicateAlternative,
    ReferencesOutput,
    UnresolvedDependency,
    Cycle,
    EmptyNode,
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum RepairAction {
    RemovedAlternative {
        node: String,
        /// Position at the time of removal.
        index: usize,
        alt: String,
        reason: RepairReason,
    },
    RemovedNode { node: String, reason: RepairReason },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RepairLog {
    pub actions: Vec<RepairAction>,
}

impl RepairLog {
    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Applies the logged removals to `lattice`.
    pub fn replay(&self, lattice: &Lattice) -> Lattice {
        let mut l = lattice.clone();
        for a in &self.actions {
            match a {
                RepairAction::RemovedAlternative { node, index, .. } => {
                    if let Some(n) = l.nodes.get_mut(node) {
                        if *index < n.alternatives.len() {
                            n.alternatives.remove(*index);
                        }
                    }
                }
                RepairAction::RemovedNode { node, .. } => {
                    l.nodes.shift_remove(node);
                }
            }
        }
        l
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RepairOptions {
    pub retain_unreachable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("repair failed: output is missing or has no alternatives")]
pub struct RepairFailure {
    pub log: RepairLog,
}

struct Repairer {
    lattice: Lattice,
    log: RepairLog,
}

impl Repairer {
    fn remove_alt(&mut self, node: &str, index: usize, reason: RepairReason) {
        let n = self.lattice.nodes.get_mut(node).expect("node exists");
        let alt = n.alternatives.remove(index);
        self.log.actions.push(RepairAction::RemovedAlternative {
            node: node.to_string(),
            index,
            alt: alt.name,
            reason,
        });
    }

    fn remove_node(&mut self, node: &str, reason: RepairReason) {
        self.lattice.nodes.shift_remove(node);
        self.log.actions.push(RepairAction::RemovedNode {
            node: node.to_string(),
            reason,
        });
    }

    /// Removes, per node in order, every alternative matching `bad`.
    fn filter_alts(&mut self, reason: RepairReason, bad: impl Fn(&Lattice, &str, usize) -> bool) -> bool {
        let names: Vec<String> = self.lattice.nodes.keys().cloned().collect();
        let mut changed = false;
        for name in names {
            let mut i = 0;
            while i < self.lattice.nodes[&name].alternatives.len() {
                if bad(&self.lattice, &name, i) {
                    self.remove_alt(&name, i, reason);
                    changed = true;
                } else {
                    i += 1;
                }
            }
        }
        changed
    }

    fn names(&mut self) {
        let bad: Vec<String> = self
            .lattice
            .nodes
            .iter()
            .filter(|(k, n)| !is_valid_name(k) || **k != n.name)
            .map(|(k, _)| k.clone())
            .collect();
        for n in bad {
            self.remove_node(&n, RepairReason::InvalidName);
        }
        self.filter_alts(RepairReason::InvalidName, |l, n, i| {
            !is_valid_name(&l.nodes[n].alternatives[i].name)
        });
        self.filter_alts(RepairReason::DuplicateAlternative, |l, n, i| {
            let alts = &l.nodes[n].alternatives;
            alts[..i].iter().any(|a| a.name == alts[i].name)
        });
    }

    fn references_output(&mut self) {
        self.filter_alts(RepairReason::ReferencesOutput, |l, n, i| {
            l.nodes[n].alternatives[i].params().iter().any(|p| p == OUTPUT)
        });
    }

    fn unresolved(&mut self) {
        self.filter_alts(RepairReason::UnresolvedDependency, |l, n, i| {
            l.nodes[n].alternatives[i]
                .params()
                .iter()
                .any(|p| !l.nodes.contains_key(p) && !l.task_inputs.contains(p))
        });
    }

    fn cycles(&mut self) {
        loop {
            let scc = strongly_connected(&self.lattice);
            let mut size = std::collections::HashMap::new();
            for c in scc.values() {
                *size.entry(*c).or_insert(0usize) += 1;
            }
            // (age, node, index) of every alternative with an edge inside a cycle
            let mut victim: Option<(u32, &String, usize)> = None;
            for (name, node) in &self.lattice.nodes {
                for (i, alt) in node.alternatives.iter().enumerate() {
                    let on_cycle = self.lattice.node_refs(alt).any(|r| {
                        r == name.as_str() || (scc[r] == scc[name.as_str()] && size[&scc[name.as_str()]] > 1)
                    });
                    if !on_cycle {
                        continue;
                    }
                    let better = match victim {
                        None => true,
                        Some((age, vn, vi)) => (alt.age, std::cmp::Reverse(name), std::cmp::Reverse(i))
                            < (age, std::cmp::Reverse(vn), std::cmp::Reverse(vi)),
                    };
                    if better {
                        victim = Some((alt.age, name, i));
                    }
                }
            }
            match victim {
                Some((_, n, i)) => {
                    let n = n.clone();
                    self.remove_alt(&n, i, RepairReason::Cycle);
                }
                None => return,
            }
        }
    }

    fn empty_nodes(&mut self) -> bool {
        let empty: Vec<String> = self
            .lattice
            .nodes
            .iter()
            .filter(|(_, n)| n.alternatives.is_empty())
            .map(|(k, _)| k.clone())
            .collect();
        for n in &empty {
            self.remove_node(n, RepairReason::EmptyNode);
        }
        !empty.is_empty()
    }

    fn unreachable(&mut self) {
        if self.lattice.output().is_none() {
            return;
        }
        let reach = reachable_from_output(&self.lattice);
        let gone: Vec<String> = self
            .lattice
            .nodes
            .keys()
            .filter(|k| !reach.contains(*k))
            .cloned()
            .collect();
        for n in gone {
            self.remove_node(&n, RepairReason::Unreachable);
        }
    }
}

/// Restores every lattice invariant or reports that `output` could not be kept.
pub fn repair(lattice: &Lattice, options: &RepairOptions) -> Result<(Lattice, RepairLog), RepairFailure> {
    let mut r = Repairer {
        lattice: lattice.clone(),
        log: RepairLog::default(),
    };
    r.names();
    loop {
        r.references_output();
        r.unresolved();
        r.cycles();
        if !r.empty_nodes() {
            break;
        }
    }
    if !options.retain_unreachable {
        r.unreachable();
    }
    if r.lattice.output().is_none_or(|o| o.alternatives.is_empty()) {
        return Err(RepairFailure { log: r.log });
    }
    Ok((r.lattice, r.log))
}
