use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lattice::{is_valid_name, Alternative, Lattice, Node, OUTPUT};

/// One structural edit. The wire form is a JSON object tagged by `op`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Edit {
    DeleteAlternative {
        node: String,
        #[serde(alias = "alt")]
        name: String,
    },
    AddAlternative {
        node: String,
        source: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    AddNode {
        #[serde(alias = "node")]
        name: String,
        sources: Vec<String>,
    },
    ReplaceAlternative {
        node: String,
        #[serde(alias = "alt")]
        name: String,
        source: String,
    },
}

impl Edit {
    pub fn is_destructive(&self) -> bool {
        matches!(self, Edit::DeleteAlternative { .. } | Edit::ReplaceAlternative { .. })
    }

    /// First source text carried by this edit, if any.
    pub fn source(&self) -> Option<&str> {
        match self {
            Edit::AddAlternative { source, .. } | Edit::ReplaceAlternative { source, .. } => Some(source),
            Edit::AddNode { sources, .. } => sources.first().map(String::as_str),
            Edit::DeleteAlternative { .. } => None,
        }
    }
}

impl fmt::Display for Edit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Edit::DeleteAlternative { node, name } => write!(f, "delete_alternative {node}/{name}"),
            Edit::AddAlternative { node, .. } => write!(f, "add_alternative {node}"),
            Edit::AddNode { name, .. } => write!(f, "add_node {name}"),
            Edit::ReplaceAlternative { node, name, .. } => write!(f, "replace_alternative {node}/{name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MutationPlan {
    pub edits: Vec<Edit>,
}

impl MutationPlan {
    pub fn new(edits: Vec<Edit>) -> Self {
        MutationPlan { edits }
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn has_destructive(&self) -> bool {
        self.edits.iter().any(Edit::is_destructive)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

fn insert_node(lattice: &mut Lattice, node: Node) {
    // new nodes go before output so snapshots keep output last
    match lattice.nodes.get_index_of(OUTPUT) {
        Some(i) => {
            lattice.nodes.shift_insert(i, node.name.clone(), node);
        }
        None => {
            lattice.nodes.insert(node.name.clone(), node);
        }
    }
}

/// Applies `plan` to a copy of `lattice`. Edits that cannot apply (unknown
/// targets, bad names, unparseable sources) are skipped; each skip is
/// described in the returned list. The result may violate invariants.
pub fn apply_plan(lattice: &Lattice, plan: &MutationPlan) -> (Lattice, Vec<String>) {
    let mut l = lattice.clone();
    let mut skipped = Vec::new();
    for edit in &plan.edits {
        if let Err(why) = apply_edit(&mut l, edit) {
            skipped.push(format!("skipped {edit}: {why}"));
        }
    }
    (l, skipped)
}

fn apply_edit(l: &mut Lattice, edit: &Edit) -> Result<(), String> {
    match edit {
        Edit::DeleteAlternative { node, name } => {
            let n = l.nodes.get_mut(node).ok_or("no such node")?;
            let i = n.position(name).ok_or("no such alternative")?;
            n.alternatives.remove(i);
        }
        Edit::AddAlternative { node, source, name } => {
            if !is_valid_name(node) {
                return Err("invalid node name".into());
            }
            if !l.nodes.contains_key(node) {
                insert_node(l, Node::new(node.as_str()));
            }
            let n = &l.nodes[node.as_str()];
            let alt_name = match name {
                Some(a) if !is_valid_name(a) => return Err(format!("invalid alternative name `{a}`")),
                Some(a) if n.alternative(a).is_some() => return Err(format!("alternative `{a}` exists")),
                Some(a) => a.clone(),
                None => n.next_alt_name(),
            };
            let alt = Alternative::new(alt_name, source.as_str()).map_err(|e| e.to_string());
            let n = l.nodes.get_mut(node).expect("present");
            match alt {
                Ok(a) => n.alternatives.push(a),
                Err(e) => {
                    if n.alternatives.is_empty() {
                        l.nodes.shift_remove(node);
                    }
                    return Err(e);
                }
            }
        }
        Edit::AddNode { name, sources } => {
            if !is_valid_name(name) {
                return Err("invalid node name".into());
            }
            if l.nodes.contains_key(name) {
                return Err("node exists".into());
            }
            if sources.is_empty() {
                return Err("no sources".into());
            }
            let mut node = Node::new(name.as_str());
            for s in sources {
                let alt = Alternative::new(node.next_alt_name(), s.as_str()).map_err(|e| e.to_string())?;
                node.alternatives.push(alt);
            }
            insert_node(l, node);
        }
        Edit::ReplaceAlternative { node, name, source } => {
            let n = l.nodes.get_mut(node).ok_or("no such node")?;
            let i = n.position(name).ok_or("no such alternative")?;
            n.alternatives[i] = Alternative::new(name.as_str(), source.as_str()).map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}
