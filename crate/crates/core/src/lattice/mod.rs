//! The lattice: named nodes, each holding an ordered list of alternatives.
//!
//! Edges are never stored. A node `u` depends on node `v` iff some alternative
//! of `u` declares a parameter named `v`; every other parameter must name a
//! declared task input.

mod diff;
mod graph;
mod snapshot;
mod validate;

use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::expr::{canonical_signature, parse, Lambda, ParseError, Signature};

pub use diff::{structural_diff, StructuralDiff};
pub use graph::{reachable_from_output, strongly_connected, topo_order};
pub use snapshot::{deserialize_snapshot, deserialize_snapshot_partial, serialize_snapshot, snapshot_file_name, SnapshotError};
pub use validate::{validate, Invariant, ValidationReport, Violation};

pub const OUTPUT: &str = "output";

/// Identifier grammar for nodes and alternatives: `[a-z][a-z0-9_]*`.
pub fn is_valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Sample statistics of the scores of every scored path containing an alternative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max: f64,
    /// Number of scored paths. Zero when restored from a snapshot, which does not record it.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alternative {
    pub name: String,
    source: String,
    lambda: Lambda,
    signature: Signature,
    pub age: u32,
    pub stats: Option<AltStats>,
}

impl Alternative {
    pub fn new(name: impl Into<String>, source: impl Into<String>) -> Result<Self, ParseError> {
        let source = source.into();
        let lambda = parse(&source)?;
        let signature = canonical_signature(&source)?;
        Ok(Alternative {
            name: name.into(),
            source,
            lambda,
            signature,
            age: 0,
            stats: None,
        })
    }

    pub fn with_age(mut self, age: u32) -> Self {
        self.age = age;
        self
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn lambda(&self) -> &Lambda {
        &self.lambda
    }

    pub fn params(&self) -> &[String] {
        &self.lambda.params
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    /// Same name, source and age; statistics are ignored.
    pub fn structurally_eq(&self, other: &Alternative) -> bool {
        self.name == other.name && self.source == other.source && self.age == other.age
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub alternatives: Vec<Alternative>,
}

impl Node {
    pub fn new(name: impl Into<String>) -> Self {
        Node {
            name: name.into(),
            alternatives: Vec::new(),
        }
    }

    pub fn alternative(&self, name: &str) -> Option<&Alternative> {
        self.alternatives.iter().find(|a| a.name == name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.alternatives.iter().position(|a| a.name == name)
    }

    /// Next free `<node>_<k>` name, where `k` starts at the current length.
    pub fn next_alt_name(&self) -> String {
        let mut k = self.alternatives.len();
        loop {
            let candidate = format!("{}_{k}", self.name);
            if self.alternative(&candidate).is_none() {
                return candidate;
            }
            k += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Lattice {
    pub nodes: IndexMap<String, Node>,
    pub task_inputs: BTreeSet<String>,
}

impl Lattice {
    pub fn new<I, S>(task_inputs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Lattice {
            nodes: IndexMap::new(),
            task_inputs: task_inputs.into_iter().map(Into::into).collect(),
        }
    }

    /// Appends `source` as a new alternative of `node` (created if missing), auto-named.
    pub fn push(&mut self, node: &str, source: &str) -> Result<&mut Alternative, ParseError> {
        let n = self
            .nodes
            .entry(node.to_string())
            .or_insert_with(|| Node::new(node));
        let alt = Alternative::new(n.next_alt_name(), source)?;
        n.alternatives.push(alt);
        Ok(n.alternatives.last_mut().expect("just pushed"))
    }

    pub fn with_inputs<I, S>(mut self, inputs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.task_inputs = inputs.into_iter().map(Into::into).collect();
        self
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.get(name)
    }

    pub fn output(&self) -> Option<&Node> {
        self.nodes.get(OUTPUT)
    }

    pub fn alternative(&self, node: &str, index: usize) -> Option<&Alternative> {
        self.nodes.get(node)?.alternatives.get(index)
    }

    /// Parameters of `alt` that name nodes of this lattice.
    pub fn node_refs<'a>(&'a self, alt: &'a Alternative) -> impl Iterator<Item = &'a str> + 'a {
        alt.params()
            .iter()
            .map(String::as_str)
            .filter(|p| self.nodes.contains_key(*p))
    }

    pub fn alternative_count(&self) -> usize {
        self.nodes.values().map(|n| n.alternatives.len()).sum()
    }

    /// Equality of node order, names, sources and ages; statistics are ignored.
    pub fn structurally_eq(&self, other: &Lattice) -> bool {
        self.nodes.len() == other.nodes.len()
            && self.nodes.iter().zip(&other.nodes).all(|((ka, a), (kb, b))| {
                ka == kb
                    && a.alternatives.len() == b.alternatives.len()
                    && a
                        .alternatives
                        .iter()
                        .zip(&b.alternatives)
                        .all(|(x, y)| x.structurally_eq(y))
            })
    }

    pub fn clear_stats(&mut self) {
        for n in self.nodes.values_mut() {
            for a in &mut n.alternatives {
                a.stats = None;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn name_grammar() {
        assert!(is_valid_name("zerolm_core_0"));
        assert!(is_valid_name("a"));
        assert!(!is_valid_name("_a"));
        assert!(!is_valid_name("0a"));
        assert!(!is_valid_name("Output"));
        assert!(!is_valid_name(""));
        assert!(!is_valid_name("a-b"));
    }

    #[test]
    fn push_auto_names() {
        let mut l = Lattice::new(["x"]);
        l.push("output", "lambda x: x").unwrap();
        l.push("output", "lambda x: -x").unwrap();
        let names: Vec<_> = l.output().unwrap().alternatives.iter().map(|a| a.name.clone()).collect();
        assert_eq!(names, ["output_0", "output_1"]);
    }
}
