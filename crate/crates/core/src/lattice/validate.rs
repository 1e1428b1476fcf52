use std::fmt;

use serde::Serialize;

use super::graph::{reachable_from_output, strongly_connected};
use super::{is_valid_name, Lattice, OUTPUT};

/// Lattice invariants, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Invariant {
    MissingOutput,
    InvalidName,
    DuplicateAlternative,
    EmptyNode,
    ReferencesOutput,
    UnresolvedParameter,
    Cycle,
    Unreachable,
}

impl Invariant {
    pub fn id(self) -> &'static str {
        match self {
            Invariant::MissingOutput => "missing_output",
            Invariant::InvalidName => "invalid_name",
            Invariant::DuplicateAlternative => "duplicate_alternative",
            Invariant::EmptyNode => "empty_node",
            Invariant::ReferencesOutput => "references_output",
            Invariant::UnresolvedParameter => "unresolved_parameter",
            Invariant::Cycle => "cycle",
            Invariant::Unreachable => "unreachable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub invariant: Invariant,
    pub node: String,
    pub alternative: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.alternative {
            Some(i) => write!(f, "{}[{i}]: {}: {}", self.node, self.invariant.id(), self.detail),
            None => write!(f, "{}: {}: {}", self.node, self.invariant.id(), self.detail),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, inv: Invariant) -> bool {
        self.violations.iter().any(|v| v.invariant == inv)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every lattice invariant. Violations are sorted by node name,
/// alternative index, then invariant.
pub fn validate(lattice: &Lattice) -> ValidationReport {
    let mut out = Vec::new();
    let mut push = |invariant, node: &str, alternative, detail: String| {
        out.push(Violation {
            invariant,
            node: node.to_string(),
            alternative,
            detail,
        })
    };

    if lattice.output().is_none() {
        push(Invariant::MissingOutput, OUTPUT, None, "no node named output".into());
    }

    let scc = strongly_connected(lattice);
    let mut comp_size = std::collections::HashMap::new();
    for c in scc.values() {
        *comp_size.entry(*c).or_insert(0usize) += 1;
    }
    let reachable = reachable_from_output(lattice);

    for (name, node) in &lattice.nodes {
        if !is_valid_name(name) || *name != node.name {
            push(Invariant::InvalidName, name, None, format!("invalid node name `{name}`"));
        }
        if node.alternatives.is_empty() {
            push(Invariant::EmptyNode, name, None, "node has no alternatives".into());
        }
        if !reachable.contains(name) && lattice.output().is_some() {
            push(Invariant::Unreachable, name, None, "not reachable from output".into());
        }
        for (i, alt) in node.alternatives.iter().enumerate() {
            if !is_valid_name(&alt.name) {
                push(
                    Invariant::InvalidName,
                    name,
                    Some(i),
                    format!("invalid alternative name `{}`", alt.name),
                );
            }
            if node.alternatives[..i].iter().any(|a| a.name == alt.name) {
                push(
                    Invariant::DuplicateAlternative,
                    name,
                    Some(i),
                    format!("duplicate alternative name `{}`", alt.name),
                );
            }
            for p in alt.params() {
                if p == OUTPUT {
                    push(Invariant::ReferencesOutput, name, Some(i), format!("`{}` references output", alt.name));
                } else if !lattice.nodes.contains_key(p) && !lattice.task_inputs.contains(p) {
                    push(
                        Invariant::UnresolvedParameter,
                        name,
                        Some(i),
                        format!("parameter `{p}` is neither a node nor a task input"),
                    );
                }
            }
            let cyclic: Vec<&str> = lattice
                .node_refs(alt)
                .filter(|r| {
                    *r == name || (scc.get(*r) == scc.get(name.as_str()) && comp_size[&scc[name.as_str()]] > 1)
                })
                .collect();
            if !cyclic.is_empty() {
                push(
                    Invariant::Cycle,
                    name,
                    Some(i),
                    format!("`{}` closes a cycle through {}", alt.name, cyclic.join(", ")),
                );
            }
        }
    }

    out.sort_by(|a, b| {
        (&a.node, a.alternative, a.invariant).cmp(&(&b.node, b.alternative, b.invariant))
    });
    ValidationReport { violations: out }
}
