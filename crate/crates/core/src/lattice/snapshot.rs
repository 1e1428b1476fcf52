//! Text snapshot of a lattice.
//!
//! ```text
//! zerolm_core:
//! - "lambda spec_topk_mean, spectral_stability, cov_sum:
//!     tanh(spec_topk_mean)
//!     * (0.7 * spectral_stability + 0.3 * sigmoid(cov_sum))
//!   # name: zerolm_core_0
//!   # mean=-0.0076 std=0.0307 max=0.0926 age=9"
//! output:
//! - "lambda zerolm_core: zerolm_core
//!   # name: output_0"
//! ```
//!
//! Each node header is followed by its alternatives as quoted entries. An
//! entry holds the lambda source verbatim (possibly spanning lines), then a
//! `# name:` line and, when statistics are attached, a stats line. Stats
//! print with four decimals. An alternative without stats but with a
//! positive age carries a bare `# age=N` line instead.

use thiserror::Error;

use super::{is_valid_name, AltStats, Alternative, Lattice, Node, OUTPUT};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SnapshotError {
    #[error("snapshot syntax error at {line}:{column}: {reason}")]
    Syntax {
        line: usize,
        column: usize,
        reason: String,
    },
    #[error("duplicate name `{name}` at line {line}")]
    DuplicateName { name: String, line: usize },
}

fn syntax(line: usize, column: usize, reason: impl Into<String>) -> SnapshotError {
    SnapshotError::Syntax {
        line,
        column,
        reason: reason.into(),
    }
}

/// File name for the snapshot of an accepted step.
pub fn snapshot_file_name(step: usize) -> String {
    format!("step_{step:06}.lattice")
}

fn push_alternative(out: &mut String, alt: &Alternative) {
    out.push_str("- \"");
    out.push_str(&alt.source);
    out.push_str("\n  # name: ");
    out.push_str(&alt.name);
    match &alt.stats {
        Some(s) => out.push_str(&format!(
            "\n  # mean={:.4} std={:.4} max={:.4} age={}",
            s.mean, s.std, s.max, alt.age
        )),
        None if alt.age > 0 => out.push_str(&format!("\n  # age={}", alt.age)),
        None => {}
    }
    out.push_str("\"\n");
}

pub(crate) fn serialize_node(out: &mut String, node: &Node) {
    out.push_str(&node.name);
    out.push_str(":\n");
    for alt in &node.alternatives {
        push_alternative(out, alt);
    }
}

pub fn serialize_snapshot(lattice: &Lattice) -> String {
    let mut out = String::new();
    for node in lattice.nodes.values() {
        serialize_node(&mut out, node);
    }
    out
}

struct Entry {
    start_line: usize,
    source_lines: Vec<String>,
    comments: Vec<(usize, String)>,
}

/// Parses snapshot text. Task inputs are not part of the format; attach them
/// with [`Lattice::with_inputs`].
pub fn deserialize_snapshot(text: &str) -> Result<Lattice, SnapshotError> {
    let lattice = parse_nodes(text)?;
    if lattice.output().is_none() {
        let count = text.lines().count();
        return Err(syntax(count.max(1), 1, "missing output node"));
    }
    Ok(lattice)
}

/// Like [`deserialize_snapshot`] but accepts text without an output node,
/// leaving that for [`validate`](super::validate) to report.
pub fn deserialize_snapshot_partial(text: &str) -> Result<Lattice, SnapshotError> {
    parse_nodes(text)
}

fn parse_nodes(text: &str) -> Result<Lattice, SnapshotError> {
    let lines: Vec<&str> = text.split('\n').collect();
    // A trailing newline yields one empty final element.
    let count = if text.ends_with('\n') { lines.len() - 1 } else { lines.len() };

    let mut lattice = Lattice::default();
    let mut current: Option<String> = None;
    let mut i = 0;
    while i < count {
        let lineno = i + 1;
        let line = lines[i];
        if line.trim().is_empty() {
            i += 1;
            continue;
        }
        if let Some(rest) = line.strip_prefix("- \"") {
            let Some(node) = current.clone() else {
                return Err(syntax(lineno, 1, "alternative before any node header"));
            };
            let mut entry = Entry {
                start_line: lineno,
                source_lines: Vec::new(),
                comments: Vec::new(),
            };
            let mut body = rest;
            let mut at = i;
            loop {
                let (content, closed) = match body.strip_suffix('"') {
                    Some(c) => (c, true),
                    None => (body, false),
                };
                if content.contains('"') {
                    let col = line_col_of_quote(lines[at], at == i);
                    return Err(syntax(at + 1, col, "unexpected quote inside alternative"));
                }
                if content.trim_start().starts_with('#') {
                    entry.comments.push((at + 1, content.trim().to_string()));
                } else if !entry.comments.is_empty() {
                    return Err(syntax(at + 1, 1, "source text after comment lines"));
                } else {
                    entry.source_lines.push(content.to_string());
                }
                if closed {
                    break;
                }
                at += 1;
                if at >= count {
                    return Err(syntax(entry.start_line, 1, "unterminated alternative (missing closing quote)"));
                }
                body = lines[at];
            }
            add_entry(&mut lattice, &node, entry)?;
            i = at + 1;
            continue;
        }
        let Some(name) = line.strip_suffix(':') else {
            return Err(syntax(lineno, 1, format!("expected node header or alternative, found `{line}`")));
        };
        if !is_valid_name(name) {
            return Err(syntax(lineno, 1, format!("invalid node name `{name}`")));
        }
        if lattice.nodes.contains_key(name) {
            return Err(SnapshotError::DuplicateName {
                name: name.to_string(),
                line: lineno,
            });
        }
        lattice.nodes.insert(name.to_string(), Node::new(name));
        current = Some(name.to_string());
        i += 1;
    }

    Ok(lattice)
}

fn line_col_of_quote(line: &str, first: bool) -> usize {
    let skip = if first { 3 } else { 0 };
    line[skip..].find('"').map(|c| c + skip + 1).unwrap_or(1)
}

fn add_entry(lattice: &mut Lattice, node_name: &str, entry: Entry) -> Result<(), SnapshotError> {
    let source = entry.source_lines.join("\n");
    let node = lattice.nodes.get_mut(node_name).expect("header inserted");

    let mut name = None;
    let mut stats = None;
    let mut age = 0u32;
    for (line, c) in &entry.comments {
        let c = c.trim_start_matches('#').trim();
        if let Some(n) = c.strip_prefix("name:") {
            let n = n.trim();
            if !is_valid_name(n) {
                return Err(syntax(*line, 1, format!("invalid alternative name `{n}`")));
            }
            name = Some(n.to_string());
        } else {
            let (s, a) = parse_stats(c).ok_or_else(|| syntax(*line, 1, format!("malformed comment `{c}`")))?;
            stats = s;
            age = a;
        }
    }

    let alt_name = name.unwrap_or_else(|| node.next_alt_name());
    if node.alternative(&alt_name).is_some() {
        return Err(SnapshotError::DuplicateName {
            name: alt_name,
            line: entry.start_line,
        });
    }
    let mut alt = Alternative::new(alt_name, source).map_err(|e| {
        let p = e.pos();
        // The first source line sits after the `- "` prefix.
        let column = if p.line == 1 { p.column + 3 } else { p.column };
        syntax(entry.start_line + p.line - 1, column, e.to_string())
    })?;
    alt.stats = stats;
    alt.age = age;
    node.alternatives.push(alt);
    Ok(())
}

/// Parses `mean=.. std=.. max=.. age=..` or a bare `age=..`.
fn parse_stats(c: &str) -> Option<(Option<AltStats>, u32)> {
    let mut mean = None;
    let mut std = None;
    let mut max = None;
    let mut age = None;
    for kv in c.split_whitespace() {
        let (k, v) = kv.split_once('=')?;
        match k {
            "mean" => mean = Some(v.parse::<f64>().ok()?),
            "std" => std = Some(v.parse::<f64>().ok()?),
            "max" => max = Some(v.parse::<f64>().ok()?),
            "age" => age = Some(v.parse::<u32>().ok()?),
            _ => return None,
        }
    }
    let age = age?;
    match (mean, std, max) {
        (Some(mean), Some(std), Some(max)) => Some((
            Some(AltStats {
                mean,
                std,
                max,
                count: 0,
            }),
            age,
        )),
        (None, None, None) => Some((None, age)),
        _ => None,
    }
}

impl Lattice {
    /// Serialized block of a single node, or empty if absent.
    pub fn node_block(&self, name: &str) -> String {
        let mut out = String::new();
        if let Some(n) = self.node(name) {
            serialize_node(&mut out, n);
        }
        out
    }

    pub fn has_output(&self) -> bool {
        self.nodes.contains_key(OUTPUT)
    }
}
