//! The evolutionary loop: evaluate, summarize, ask for a plan, apply, repair,
//! then accept or reject the candidate.

mod plan;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{alternative_stats, node_importance, step_metrics, ImportanceTable, StepMetrics};
use crate::engine::{evaluate_lattice, evaluate_lattice_including, EvaluationReport, GlobalCache, Path};
use crate::lattice::{structural_diff, Lattice, OUTPUT};
use crate::oracle::{Oracle, OracleContext, OracleError, TransportError};
use crate::repair::{repair, RepairLog, RepairOptions};
use crate::seed::derive_seed;
use crate::tasks::Task;

pub use plan::{apply_plan, Edit, MutationPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSettings {
    pub path_budget: usize,
    pub retain_unreachable: bool,
    pub importance_sigma: f64,
    pub importance_samples: usize,
    /// Seeds path sampling and importance noise.
    pub sampler_seed: u64,
}

impl Default for EvolutionSettings {
    fn default() -> Self {
        EvolutionSettings {
            path_budget: 64,
            retain_unreachable: false,
            importance_sigma: 0.01,
            importance_samples: 16,
            sampler_seed: 0,
        }
    }
}

/// Loop state between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    /// Index of the last completed step.
    pub step: usize,
    pub lattice: Lattice,
    pub best_path: Option<Path>,
    pub best_so_far: Option<f64>,
    /// Diff of the last candidate against its parent, accepted or not.
    pub prev_diff: String,
    pub history: Vec<MetricsRow>,
}

impl RunState {
    pub fn new(lattice: Lattice) -> Self {
        RunState {
            step: 0,
            lattice,
            best_path: None,
            best_so_far: None,
            prev_diff: String::new(),
            history: Vec::new(),
        }
    }
}

/// One line of `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub best: Option<f64>,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub variance: Option<f64>,
    pub p10: Option<f64>,
    pub p25: Option<f64>,
    pub p75: Option<f64>,
    pub p90: Option<f64>,
    pub path_total: u128,
    pub scored: usize,
    pub failed: usize,
    pub best_so_far: Option<f64>,
    pub accepted: bool,
}

impl MetricsRow {
    pub fn new(step: usize, m: &StepMetrics, accepted: bool) -> Self {
        MetricsRow {
            step,
            best: m.best,
            mean: m.mean,
            median: m.median,
            variance: m.variance,
            p10: m.p10,
            p25: m.p25,
            p75: m.p75,
            p90: m.p90,
            path_total: m.path_total,
            scored: m.scored,
            failed: m.failed,
            best_so_far: m.best_so_far,
            accepted,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("row serializes")
    }
}

/// One line of `steps.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub hypotheses: Vec<String>,
    pub plan: MutationPlan,
    pub skipped_edits: Vec<String>,
    pub repair_log: RepairLog,
    pub repair_failed: bool,
    pub oracle_error: Option<String>,
    /// Best-so-far before the step.
    pub pre_best: Option<f64>,
    /// Best scored path of the candidate.
    pub post_best: Option<f64>,
    pub accepted: bool,
    pub diff: String,
    pub changed_nodes: Vec<String>,
    /// Transcript files written for this step, relative to the run directory.
    pub transcripts: Vec<String>,
    pub candidate_path_total: u128,
    pub candidate_scored: usize,
    pub candidate_failed: usize,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub importance: Option<ImportanceTable>,
}

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("{0}")]
    Transcript(String),
    #[error("{0}")]
    MissingTranscript(String),
}

/// Best path of `old` re-expressed in `new` by alternative names.
fn translate_path(path: &Path, old: &Lattice, new: &Lattice) -> Option<Path> {
    let mut out = Path::default();
    for (node, &i) in &path.assignment {
        let name = &old.alternative(node, i)?.name;
        out.assignment.insert(node.clone(), new.node(node)?.position(name)?);
    }
    out.is_closed_over(new).then_some(out)
}

/// `base` with `node` switched to alternative `alt`, closed over `l`: nodes
/// `base` does not assign take their highest-mean alternative. `None` unless
/// the switched node ends up on the path.
fn switch_path(l: &Lattice, base: &Path, node: &str, alt: usize) -> Option<Path> {
    fn choose(l: &Lattice, base: &Path, n: &str) -> usize {
        let alts = &l.nodes[n].alternatives;
        if let Some(i) = base.get(n).filter(|i| *i < alts.len()) {
            return i;
        }
        let mean = |i: usize| alts[i].stats.map_or(f64::NEG_INFINITY, |s| s.mean);
        (0..alts.len()).fold(0, |b, i| if mean(i) > mean(b) { i } else { b })
    }
    let mut out = Path::default();
    let mut stack = vec![OUTPUT.to_string()];
    while let Some(n) = stack.pop() {
        if out.assignment.contains_key(&n) {
            continue;
        }
        let i = if n == node { alt } else { choose(l, base, &n) };
        let a = l.alternative(&n, i)?;
        stack.extend(l.node_refs(a).map(str::to_string));
        out.assignment.insert(n, i);
    }
    out.assignment.contains_key(node).then_some(out)
}

/// Paths a candidate sample must keep: the carried-over best path, then the
/// best path with each new alternative switched in, so that fresh
/// alternatives are scored in the context that currently works best.
fn candidate_focus(cand: &Lattice, parent: &Lattice, best: Option<&Path>) -> Vec<Path> {
    let base = best.and_then(|p| translate_path(p, parent, cand));
    let mut out: Vec<Path> = base.iter().cloned().collect();
    let empty = Path::default();
    for (name, node) in &cand.nodes {
        for (i, alt) in node.alternatives.iter().enumerate() {
            let old = parent.node(name).and_then(|n| n.alternative(&alt.name));
            if old.is_some_and(|o| o.source() == alt.source()) {
                continue;
            }
            if let Some(p) = switch_path(cand, base.as_ref().unwrap_or(&empty), name, i) {
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        }
    }
    out
}

fn bump_ages(candidate: &mut Lattice, parent: &Lattice) {
    for (name, node) in candidate.nodes.iter_mut() {
        let Some(old) = parent.node(name) else { continue };
        for alt in &mut node.alternatives {
            if old.alternative(&alt.name).is_some_and(|o| o.source() == alt.source()) {
                alt.age += 1;
            }
        }
    }
}

fn report_best(r: &EvaluationReport) -> Option<(Path, f64)> {
    r.best().map(|(p, s)| (p.clone(), s))
}

/// Drives steps against one task, cache and oracle.
pub struct Evolver<'a> {
    pub task: &'a dyn Task,
    pub cache: &'a GlobalCache,
    pub oracle: Oracle,
    pub settings: EvolutionSettings,
    /// Relative names of transcript files, reported in step records.
    pub transcript_prefix: Option<String>,
}

impl Evolver<'_> {
    fn evaluate(&self, lattice: &Lattice, seed: u64, best: Option<&Path>) -> EvaluationReport {
        evaluate_lattice(lattice, self.task, self.settings.path_budget, seed, best, self.cache)
    }

    /// Evaluates the starting lattice so the first step has a baseline best score.
    pub fn initialize(&self, state: &mut RunState) {
        let seed = derive_seed(self.settings.sampler_seed, "step/0");
        let report = self.evaluate(&state.lattice, seed, None);
        if let Ok(stats) = alternative_stats(&report, 0) {
            stats.attach(&mut state.lattice);
        }
        if let Some((p, s)) = report_best(&report) {
            state.best_path = Some(p);
            state.best_so_far = Some(s);
        }
    }

    /// Runs one step, mutating `state` in place.
    pub fn step(&mut self, state: &mut RunState) -> Result<(StepRecord, MetricsRow), EvolutionError> {
        let n = state.step + 1;
        let seed = derive_seed(self.settings.sampler_seed, &format!("step/{n}"));

        // (i)-(ii) evaluate the current lattice and summarize it
        let report = self.evaluate(&state.lattice, seed, state.best_path.as_ref());
        if let Ok(stats) = alternative_stats(&report, n) {
            stats.attach(&mut state.lattice);
        }
        let importance = state.best_path.as_ref().and_then(|best| {
            node_importance(
                &state.lattice,
                best,
                self.task,
                self.settings.importance_sigma,
                self.settings.importance_samples,
                derive_seed(seed, "importance"),
                self.cache,
            )
        });
        // best-so-far only moves on acceptance, even if this sample found a better path
        let metrics_pre = StepMetrics {
            best_so_far: state.best_so_far,
            ..step_metrics(&report, state.best_so_far)
        };

        let mut record = StepRecord {
            step: n,
            hypotheses: Vec::new(),
            plan: MutationPlan::default(),
            skipped_edits: Vec::new(),
            repair_log: RepairLog::default(),
            repair_failed: false,
            oracle_error: None,
            pre_best: state.best_so_far,
            post_best: None,
            accepted: false,
            diff: String::new(),
            changed_nodes: Vec::new(),
            transcripts: Vec::new(),
            candidate_path_total: 0,
            candidate_scored: 0,
            candidate_failed: 0,
            cache_hits: report.cache_hits,
            cache_misses: report.cache_misses,
            importance: importance.clone(),
        };
        if let Some(prefix) = &self.transcript_prefix {
            record.transcripts = vec![format!("{prefix}/step_{n:06}_hypo.txt"), format!("{prefix}/step_{n:06}_mut.txt")];
        }

        // (iii) hypotheses and plan
        let inputs = self.task.inputs();
        let summary = self.task.describe();
        let ctx = OracleContext {
            step: n,
            lattice: &state.lattice,
            importance: importance.as_ref(),
            best_path: state.best_path.as_ref(),
            best_so_far: state.best_so_far,
            prev_diff: &state.prev_diff,
            task_inputs: &inputs,
            output_kind: self.task.output_kind(),
            task_summary: &summary,
        };
        let proposal = self
            .oracle
            .hypotheses(&ctx)
            .and_then(|h| {
                record.hypotheses = h;
                self.oracle.propose(&ctx, &record.hypotheses)
            });
        let plan = match proposal {
            Ok(p) => p,
            Err(OracleError::Transcript(e)) => return Err(EvolutionError::Transcript(e)),
            Err(OracleError::Transport(TransportError::MissingTranscript(e))) => {
                return Err(EvolutionError::MissingTranscript(e))
            }
            Err(e) => {
                log::warn!("step {n}: {e}");
                record.oracle_error = Some(e.to_string());
                MutationPlan::default()
            }
        };
        record.plan = plan;

        // (iv)-(v) apply and repair
        let (applied, skipped) = apply_plan(&state.lattice, &record.plan);
        record.skipped_edits = skipped;
        let opts = RepairOptions {
            retain_unreachable: self.settings.retain_unreachable,
        };
        let candidate = match repair(&applied, &opts) {
            Ok((c, log)) => {
                record.repair_log = log;
                Some(c)
            }
            Err(f) => {
                record.repair_log = f.log;
                record.repair_failed = true;
                None
            }
        };

        let mut row = MetricsRow::new(n, &metrics_pre, false);
        if let Some(mut cand) = candidate {
            // (vi) evaluate the candidate and accept on strict improvement
            let focus = candidate_focus(&cand, &state.lattice, state.best_path.as_ref());
            let cr = evaluate_lattice_including(&cand, self.task, self.settings.path_budget, seed, &focus, self.cache);
            record.candidate_path_total = cr.enumerated_total;
            record.candidate_scored = cr.scored.len();
            record.candidate_failed = cr.failed.len();
            record.cache_hits += cr.cache_hits;
            record.cache_misses += cr.cache_misses;
            let cand_best = report_best(&cr);
            record.post_best = cand_best.as_ref().map(|(_, s)| *s);

            let mut before = state.lattice.clone();
            before.clear_stats();
            let mut after = cand.clone();
            after.clear_stats();
            let diff = structural_diff(&before, &after);
            record.diff = diff.text.clone();
            record.changed_nodes = diff.changed_nodes;
            state.prev_diff = diff.text;

            if let Some((path, score)) = cand_best {
                if state.best_so_far.is_none_or(|b| score > b) {
                    record.accepted = true;
                    bump_ages(&mut cand, &state.lattice);
                    if let Ok(stats) = alternative_stats(&cr, n) {
                        stats.attach(&mut cand);
                    }
                    state.lattice = cand;
                    state.best_path = Some(path);
                    state.best_so_far = Some(score);
                    row = MetricsRow::new(n, &step_metrics(&cr, record.pre_best), true);
                }
            }
        } else {
            state.prev_diff.clear();
        }
        state.step = n;
        state.history.push(row.clone());
        Ok((record, row))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_translation_follows_names() {
        let mut old = Lattice::new(["x"]);
        old.push("a", "lambda x: x").unwrap();
        old.push("a", "lambda x: 2 * x").unwrap();
        old.push("output", "lambda a: a").unwrap();
        let mut new = old.clone();
        new.nodes.get_mut("a").unwrap().alternatives.remove(0);
        let p = Path {
            assignment: [("a".to_string(), 1), ("output".to_string(), 0)].into(),
        };
        let t = translate_path(&p, &old, &new).unwrap();
        assert_eq!(t.get("a"), Some(0));
        let q = Path {
            assignment: [("a".to_string(), 0), ("output".to_string(), 0)].into(),
        };
        assert!(translate_path(&q, &old, &new).is_none());
    }
}
