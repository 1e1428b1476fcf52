//! Per-alternative statistics, best-path node importance and step metrics.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EvaluationReport, GlobalCache, Path, PathExecutor};
use crate::expr::Value;
use crate::lattice::{AltStats, Lattice, OUTPUT};
use crate::seed::derive_seed;
use crate::tasks::Task;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    #[error("report has no scored paths")]
    EmptyReport,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StatsTable {
    pub step: usize,
    /// Keyed by (node, alternative index).
    pub entries: BTreeMap<(String, usize), AltStats>,
}

impl StatsTable {
    pub fn get(&self, node: &str, alt: usize) -> Option<&AltStats> {
        self.entries.get(&(node.to_string(), alt))
    }

    /// Replaces the statistics on every alternative of `lattice`; alternatives
    /// without an entry end up with none.
    pub fn attach(&self, lattice: &mut Lattice) {
        for (name, node) in lattice.nodes.iter_mut() {
            for (i, alt) in node.alternatives.iter_mut().enumerate() {
                alt.stats = self.entries.get(&(name.clone(), i)).copied();
            }
        }
    }
}

fn summarize(scores: &[f64]) -> AltStats {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    AltStats {
        mean,
        std: var.sqrt(),
        max: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        count: scores.len(),
    }
}

/// Mean, population std and max of the scores of all paths through each alternative.
pub fn alternative_stats(report: &EvaluationReport, step: usize) -> Result<StatsTable, AnalyticsError> {
    if report.scored.is_empty() {
        return Err(AnalyticsError::EmptyReport);
    }
    let mut groups: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for (path, score) in &report.scored {
        for (node, alt) in &path.assignment {
            groups.entry((node.clone(), *alt)).or_default().push(*score);
        }
    }
    Ok(StatsTable {
        step,
        entries: groups.into_iter().map(|(k, v)| (k, summarize(&v))).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeImportance {
    pub node: String,
    /// Mean absolute score change; `None` if a perturbed run failed.
    pub importance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub entries: Vec<NodeImportance>,
    pub sigma_rel: f64,
    pub samples: usize,
}

impl ImportanceTable {
    pub fn get(&self, node: &str) -> Option<&NodeImportance> {
        self.entries.iter().find(|e| e.node == node)
    }
}

/// Perturbs each non-output node on `best` in turn by Gaussian noise with
/// standard deviation `sigma_rel * max(|value|_inf, 1)` per element and
/// averages the absolute change in score. Returns `None` if the
/// unperturbed path does not score.
pub fn node_importance(
    lattice: &Lattice,
    best: &Path,
    task: &dyn Task,
    sigma_rel: f64,
    samples: usize,
    seed: u64,
    cache: &GlobalCache,
) -> Option<ImportanceTable> {
    let base = task.score(&mut PathExecutor::new(lattice, best, cache)).ok()?;
    let mut entries = Vec::new();
    for node in best.assignment.keys().filter(|n| *n != OUTPUT) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, node));
        let mut total = 0.0;
        let mut failed = false;
        for _ in 0..samples.max(1) {
            let mut perturb = |values: &mut [Value]| {
                for v in values.iter_mut() {
                    let sd = sigma_rel * v.max_abs().max(1.0);
                    let xs: &mut [f64] = match v {
                        Value::Scalar(x) => std::slice::from_mut(x),
                        Value::Vector(xs) => xs,
                    };
                    for x in xs {
                        *x += sd * rng.sample::<f64, _>(StandardNormal);
                    }
                }
            };
            let mut exec = PathExecutor::new(lattice, best, cache).with_perturbation(node, &mut perturb);
            match task.score(&mut exec) {
                Ok(s) => total += (s - base).abs(),
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        entries.push(NodeImportance {
            node: node.clone(),
            importance: (!failed).then(|| total / samples.max(1) as f64),
        });
    }
    Some(ImportanceTable {
        entries,
        sigma_rel,
        samples: samples.max(1),
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepMetrics {
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
}

/// Linear interpolation between closest ranks; `sorted` must be ascending and non-empty.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn step_metrics(report: &EvaluationReport, prev_best_so_far: Option<f64>) -> StepMetrics {
    let mut m = StepMetrics {
        path_total: report.enumerated_total,
        scored: report.scored.len(),
        failed: report.failed.len(),
        best_so_far: prev_best_so_far,
        ..Default::default()
    };
    let mut s = report.scores();
    if s.is_empty() {
        return m;
    }
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let best = s[s.len() - 1];
    m.best = Some(best);
    m.mean = Some(mean);
    m.median = Some(percentile(&s, 0.5));
    m.variance = Some(s.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n);
    m.p10 = Some(percentile(&s, 0.10));
    m.p25 = Some(percentile(&s, 0.25));
    m.p75 = Some(percentile(&s, 0.75));
    m.p90 = Some(percentile(&s, 0.90));
    m.best_so_far = Some(prev_best_so_far.map_or(best, |p| p.max(best)));
    m
}
