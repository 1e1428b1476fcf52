use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use indexmap::IndexMap;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::cache::{BatchToken, GlobalCache, KeyPart, SubpathKey};
use super::path::Path;
use crate::expr::{evaluate, EvalError, Value};
use crate::lattice::{Lattice, OUTPUT};

/// Column-oriented input records for one evaluation phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub token: BatchToken,
    pub columns: IndexMap<String, Vec<Value>>,
    len: usize,
}

impl Batch {
    /// All columns must have the same length.
    pub fn new(token: BatchToken, columns: IndexMap<String, Vec<Value>>) -> Self {
        let len = columns.values().next().map_or(0, Vec::len);
        assert!(columns.values().all(|c| c.len() == len), "ragged batch");
        Batch { token, columns, len }
    }

    /// Builds a batch from per-record environments. Every record must bind the same names.
    pub fn from_records(token: BatchToken, records: Vec<Vec<(String, Value)>>) -> Self {
        let mut columns: IndexMap<String, Vec<Value>> = IndexMap::new();
        for rec in records {
            for (k, v) in rec {
                columns.entry(k).or_default().push(v);
            }
        }
        Batch::new(token, columns)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("{node}/{alternative} failed on record {record}: {source}")]
    Eval {
        node: String,
        alternative: String,
        record: usize,
        source: EvalError,
    },
    #[error("missing input `{0}`")]
    MissingInput(String),
    #[error("path does not assign node `{0}`")]
    NotClosed(String),
}

/// Something a task can run on a batch to get one output value per record.
pub trait Candidate {
    fn run(&mut self, batch: &Batch) -> Result<Vec<Value>, ExecError>;
}

/// Counts node computations that actually ran the evaluator.
#[derive(Debug, Default)]
pub struct ExecCounters {
    pub node_evaluations: AtomicU64,
}

impl ExecCounters {
    pub fn evaluations(&self) -> u64 {
        self.node_evaluations.load(Ordering::Relaxed)
    }
}

/// Additive perturbation of one node's per-record values.
pub type Perturb<'a> = dyn FnMut(&mut [Value]) + 'a;

/// Runs one path of a lattice. Each node is computed at most once per batch
/// (local memo) and shared with other paths through the global cache.
pub struct PathExecutor<'a> {
    lattice: &'a Lattice,
    path: &'a Path,
    cache: &'a GlobalCache,
    counters: Option<&'a ExecCounters>,
    perturb: Option<(&'a str, &'a mut Perturb<'a>)>,
}

struct Computed {
    key: SubpathKey,
    values: Arc<Vec<Value>>,
    /// Downstream of a perturbed node; never read from or written to the global cache.
    tainted: bool,
}

impl<'a> PathExecutor<'a> {
    pub fn new(lattice: &'a Lattice, path: &'a Path, cache: &'a GlobalCache) -> Self {
        PathExecutor {
            lattice,
            path,
            cache,
            counters: None,
            perturb: None,
        }
    }

    pub fn with_counters(mut self, counters: &'a ExecCounters) -> Self {
        self.counters = Some(counters);
        self
    }

    /// Applies `f` to `node`'s values after they are computed.
    pub fn with_perturbation(mut self, node: &'a str, f: &'a mut Perturb<'a>) -> Self {
        self.perturb = Some((node, f));
        self
    }

    fn compute(
        &mut self,
        node: &str,
        batch: &Batch,
        memo: &mut HashMap<String, Computed>,
    ) -> Result<(), ExecError> {
        if memo.contains_key(node) {
            return Ok(());
        }
        let lattice = self.lattice;
        let idx = self
            .path
            .get(node)
            .ok_or_else(|| ExecError::NotClosed(node.to_string()))?;
        let alt = lattice
            .alternative(node, idx)
            .ok_or_else(|| ExecError::NotClosed(node.to_string()))?;

        for p in alt.params() {
            if lattice.nodes.contains_key(p) {
                self.compute(p, batch, memo)?;
            } else if !batch.columns.contains_key(p) {
                return Err(ExecError::MissingInput(p.clone()));
            }
        }

        let mut tainted = false;
        let parts: Vec<KeyPart<'_>> = alt
            .params()
            .iter()
            .map(|p| match memo.get(p) {
                Some(c) => {
                    tainted |= c.tainted;
                    KeyPart::Node(&c.key)
                }
                None => KeyPart::Input(p),
            })
            .collect();
        let key = SubpathKey::new(node, &alt.signature(), &parts, &batch.token);
        let perturbed_here = self.perturb.as_ref().is_some_and(|(n, _)| *n == node);

        let cached = if tainted { None } else { self.cache.get(&key) };
        let mut values = match cached {
            Some(v) => v,
            None => {
                if let Some(c) = self.counters {
                    c.node_evaluations.fetch_add(1, Ordering::Relaxed);
                }
                let columns: Vec<&[Value]> = alt
                    .params()
                    .iter()
                    .map(|p| match memo.get(p) {
                        Some(c) => c.values.as_slice(),
                        None => batch.columns[p].as_slice(),
                    })
                    .collect();
                let mut out = Vec::with_capacity(batch.len());
                let mut args: Vec<&Value> = Vec::with_capacity(columns.len());
                for r in 0..batch.len() {
                    args.clear();
                    args.extend(columns.iter().map(|c| &c[r]));
                    let v = evaluate(&alt.lambda().body, &args).map_err(|source| ExecError::Eval {
                        node: node.to_string(),
                        alternative: alt.name.clone(),
                        record: r,
                        source,
                    })?;
                    out.push(v);
                }
                let out = Arc::new(out);
                if tainted {
                    out
                } else {
                    self.cache.insert_if_absent(key, out)
                }
            }
        };

        if perturbed_here {
            let (_, f) = self.perturb.as_mut().expect("checked");
            let mut owned = values.as_ref().clone();
            f(&mut owned);
            values = Arc::new(owned);
            tainted = true;
        }
        memo.insert(node.to_string(), Computed { key, values, tainted });
        Ok(())
    }
}

impl Candidate for PathExecutor<'_> {
    fn run(&mut self, batch: &Batch) -> Result<Vec<Value>, ExecError> {
        let mut memo = HashMap::new();
        self.compute(OUTPUT, batch, &mut memo)?;
        let out = memo.remove(OUTPUT).expect("computed");
        Ok(Arc::try_unwrap(out.values).unwrap_or_else(|a| a.as_ref().clone()))
    }
}

/// Runs a path on a single record given by name → value.
pub fn execute_path(
    lattice: &Lattice,
    path: &Path,
    inputs: &HashMap<String, Value>,
    cache: &GlobalCache,
) -> Result<Value, ExecError> {
    let mut names: Vec<&String> = inputs.keys().collect();
    names.sort();
    let mut h = Sha256::new();
    for n in &names {
        h.update((n.len() as u64).to_le_bytes());
        h.update(n.as_bytes());
        for x in inputs[*n].as_slice() {
            h.update(x.to_bits().to_le_bytes());
        }
        h.update([0xff]);
    }
    let token = BatchToken(h.finalize().into());
    let columns = names.into_iter().map(|k| (k.clone(), vec![inputs[k].clone()])).collect();
    let batch = Batch::new(token, columns);
    let mut exec = PathExecutor::new(lattice, path, cache);
    Ok(exec.run(&batch)?.remove(0))
}
