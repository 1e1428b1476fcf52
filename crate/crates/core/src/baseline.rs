//! Overwrite-based single-candidate evolution, for comparison with the lattice.
//!
//! Exactly one program is live. `Regenerate` asks the oracle for a complete
//! replacement each step; `Diff` asks for an edit of the current program.
//! Acceptance and logging follow the lattice loop, with one path per step.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::analytics::{alternative_stats, step_metrics, StepMetrics};
use crate::engine::{evaluate_lattice, EvaluationReport, GlobalCache, Path};
use crate::evolution::{Edit, EvolutionError, MetricsRow, MutationPlan, StepRecord};
use crate::expr::{Expr, Kind, Lambda};
use crate::lattice::{structural_diff, validate, Lattice, OUTPUT};
use crate::oracle::grammar::{close_over, map_params};
use crate::oracle::{Oracle, OracleContext, OracleError, Purpose, TransportError};
use crate::seed::derive_seed;
use crate::tasks::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    Regenerate,
    Diff,
}

impl BaselineMode {
    fn purpose(self) -> Purpose {
        match self {
            BaselineMode::Regenerate => Purpose::Regenerate,
            BaselineMode::Diff => Purpose::Edit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub source: String,
    pub score: Option<f64>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleCandidate {
    pub source: String,
    pub score: Option<f64>,
    pub history: Vec<HistoryEntry>,
}

/// Inlines every node reference along `path` into one lambda over task inputs.
pub fn inline_path(lattice: &Lattice, path: &Path) -> Option<Lambda> {
    fn go(
        l: &Lattice,
        path: &Path,
        node: &str,
        inputs: &[(String, Kind)],
        memo: &mut HashMap<String, Expr>,
    ) -> Option<Expr> {
        if let Some(e) = memo.get(node) {
            return Some(e.clone());
        }
        let alt = l.alternative(node, path.get(node)?)?;
        let mut args = Vec::new();
        for p in alt.params() {
            let e = if l.nodes.contains_key(p) {
                go(l, path, p, inputs, memo)?
            } else {
                Expr::Param(inputs.iter().position(|(n, _)| n == p)?)
            };
            args.push(e);
        }
        let e = map_params(&alt.lambda().body, &|i| args[i].clone());
        memo.insert(node.to_string(), e.clone());
        Some(e)
    }
    // kinds do not matter for closing over names
    let inputs: Vec<(String, Kind)> = lattice.task_inputs.iter().map(|n| (n.clone(), Kind::Scalar)).collect();
    let body = go(lattice, path, OUTPUT, &inputs, &mut HashMap::new())?;
    Some(close_over(&body, &inputs))
}

/// Single-node lattice holding `source` as `output_0`.
pub fn single_lattice(task: &dyn Task, source: &str) -> Option<Lattice> {
    let mut l = Lattice::new(task.input_names());
    l.push(OUTPUT, source).ok()?;
    validate(&l).is_ok().then_some(l)
}

pub struct Baseline<'a> {
    pub task: &'a dyn Task,
    pub cache: &'a GlobalCache,
    pub oracle: Oracle,
    pub mode: BaselineMode,
    pub sampler_seed: u64,
    pub candidate: SingleCandidate,
    step: usize,
}

impl<'a> Baseline<'a> {
    pub fn new(
        task: &'a dyn Task,
        cache: &'a GlobalCache,
        oracle: Oracle,
        mode: BaselineMode,
        sampler_seed: u64,
        initial: String,
    ) -> Self {
        let mut b = Baseline {
            task,
            cache,
            oracle,
            mode,
            sampler_seed,
            candidate: SingleCandidate {
                source: initial,
                score: None,
                history: Vec::new(),
            },
            step: 0,
        };
        b.candidate.score = b.evaluate(&b.candidate.source.clone(), 0).and_then(|r| r.best().map(|(_, s)| s));
        b
    }

    fn evaluate(&self, source: &str, step: usize) -> Option<EvaluationReport> {
        let l = single_lattice(self.task, source)?;
        let seed = derive_seed(self.sampler_seed, &format!("step/{step}"));
        Some(evaluate_lattice(&l, self.task, 1, seed, None, self.cache))
    }

    /// Current program as a lattice, with stats from `report` when given.
    pub fn lattice(&self, report: Option<&EvaluationReport>) -> Lattice {
        let mut l = single_lattice(self.task, &self.candidate.source)
            .unwrap_or_else(|| Lattice::new(self.task.input_names()));
        if let Some(s) = report.and_then(|r| alternative_stats(r, self.step).ok()) {
            s.attach(&mut l);
        }
        l
    }

    pub fn step(&mut self) -> Result<(StepRecord, MetricsRow), EvolutionError> {
        let n = self.step + 1;
        let current = self.evaluate(&self.candidate.source, n).unwrap_or_default();
        let pre = StepMetrics {
            best_so_far: self.candidate.score,
            ..step_metrics(&current, self.candidate.score)
        };
        let lattice = self.lattice(Some(&current));
        let inputs = self.task.inputs();
        let summary = self.task.describe();
        let ctx = OracleContext {
            step: n,
            lattice: &lattice,
            importance: None,
            best_path: None,
            best_so_far: self.candidate.score,
            prev_diff: "",
            task_inputs: &inputs,
            output_kind: self.task.output_kind(),
            task_summary: &summary,
        };
        let mut record = StepRecord {
            step: n,
            hypotheses: Vec::new(),
            plan: MutationPlan::default(),
            skipped_edits: Vec::new(),
            repair_log: Default::default(),
            repair_failed: false,
            oracle_error: None,
            pre_best: self.candidate.score,
            post_best: None,
            accepted: false,
            diff: String::new(),
            changed_nodes: Vec::new(),
            transcripts: Vec::new(),
            candidate_path_total: 0,
            candidate_scored: 0,
            candidate_failed: 0,
            cache_hits: current.cache_hits,
            cache_misses: current.cache_misses,
            importance: None,
        };
        let proposal = match self.oracle.propose_source(&ctx, self.mode.purpose(), &self.candidate.source) {
            Ok(src) => Some(src),
            Err(OracleError::Transcript(e)) => return Err(EvolutionError::Transcript(e)),
            Err(OracleError::Transport(TransportError::MissingTranscript(e))) => {
                return Err(EvolutionError::MissingTranscript(e))
            }
            Err(e) => {
                record.oracle_error = Some(e.to_string());
                None
            }
        };

        let mut row = MetricsRow::new(n, &pre, false);
        if let Some(src) = proposal {
            record.plan = MutationPlan::new(vec![Edit::ReplaceAlternative {
                node: OUTPUT.into(),
                name: format!("{OUTPUT}_0"),
                source: src.clone(),
            }]);
            let report = self.evaluate(&src, n);
            let score = report.as_ref().and_then(|r| r.best().map(|(_, s)| s));
            if let Some(r) = &report {
                record.candidate_path_total = r.enumerated_total;
                record.candidate_scored = r.scored.len();
                record.candidate_failed = r.failed.len();
                record.cache_hits += r.cache_hits;
                record.cache_misses += r.cache_misses;
            } else {
                record.skipped_edits.push("candidate is not a valid single-node program".into());
            }
            record.post_best = score;
            let old = self.lattice(None);
            if let Some(new) = single_lattice(self.task, &src) {
                let d = structural_diff(&old, &new);
                record.diff = d.text;
                record.changed_nodes = d.changed_nodes;
            }
            let accepted = score.is_some_and(|s| self.candidate.score.is_none_or(|b| s > b));
            if accepted {
                record.accepted = true;
                let r = report.as_ref().expect("scored");
                row = MetricsRow::new(n, &step_metrics(r, self.candidate.score), true);
                self.candidate.source = src.clone();
                self.candidate.score = score;
            }
            self.candidate.history.push(HistoryEntry {
                step: n,
                source: src,
                score,
                accepted,
            });
        }
        self.step = n;
        Ok((record, row))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inlines_shared_nodes() {
        let mut l = Lattice::new(["x", "y"]);
        l.push("a", "lambda x: x + 1").unwrap();
        l.push("b", "lambda a, y: a * y").unwrap();
        l.push("output", "lambda a, b: a - b").unwrap();
        let p = Path {
            assignment: [("a".into(), 0), ("b".into(), 0), ("output".into(), 0)].into(),
        };
        assert_eq!(inline_path(&l, &p).unwrap().to_string(), "lambda x, y: x + 1.0 - (x + 1.0) * y");
    }
}
