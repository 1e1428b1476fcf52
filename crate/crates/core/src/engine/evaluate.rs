use super::cache::GlobalCache;
use super::exec::PathExecutor;
use super::path::{enumerate_paths_including, Path};
use crate::lattice::Lattice;
use crate::tasks::{Task, TaskError};

#[derive(Debug, Clone, Default)]
pub struct EvaluationReport {
    pub scored: Vec<(Path, f64)>,
    pub failed: Vec<(Path, TaskError)>,
    /// Cache lookups that hit or missed during this evaluation.
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub enumerated_total: u128,
    pub sampled: bool,
}

impl EvaluationReport {
    /// Highest-scoring path; ties go to the first in path order.
    pub fn best(&self) -> Option<(&Path, f64)> {
        let mut best: Option<(&Path, f64)> = None;
        for (p, s) in &self.scored {
            if best.is_none_or(|(_, b)| *s > b) {
                best = Some((p, *s));
            }
        }
        best
    }

    pub fn scores(&self) -> Vec<f64> {
        self.scored.iter().map(|(_, s)| *s).collect()
    }
}

/// Enumerates (or samples) paths and scores each one with `task`. Paths whose
/// execution or scoring fails land in `failed`.
pub fn evaluate_lattice(
    lattice: &Lattice,
    task: &dyn Task,
    budget: usize,
    seed: u64,
    best: Option<&Path>,
    cache: &GlobalCache,
) -> EvaluationReport {
    evaluate_lattice_including(lattice, task, budget, seed, best.map(std::slice::from_ref).unwrap_or_default(), cache)
}

/// [`evaluate_lattice`] with several paths that a sample must keep.
pub fn evaluate_lattice_including(
    lattice: &Lattice,
    task: &dyn Task,
    budget: usize,
    seed: u64,
    include: &[Path],
    cache: &GlobalCache,
) -> EvaluationReport {
    let (h0, m0) = (cache.hits(), cache.misses());
    let en = enumerate_paths_including(lattice, budget, seed, include);
    let mut report = EvaluationReport {
        enumerated_total: en.total,
        sampled: en.sampled,
        ..Default::default()
    };
    for path in en.paths {
        let mut exec = PathExecutor::new(lattice, &path, cache);
        match task.score(&mut exec) {
            Ok(s) => report.scored.push((path, s)),
            Err(e) => report.failed.push((path, e)),
        }
    }
    report.cache_hits = cache.hits() - h0;
    report.cache_misses = cache.misses() - m0;
    report
}
