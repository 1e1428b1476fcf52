//! Benchmark tasks that turn a candidate program into a scalar score.

mod export;
mod optimizer;
mod ranking;
mod regression;
mod spearman;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{Batch, Candidate, ExecError};
use crate::expr::{Kind, Value};
use crate::lattice::Lattice;

pub use export::export_csv;
pub use optimizer::{OptimizerConfig, OptimizerTask, Probe, OPTIMIZER_BASELINES};
pub use ranking::{generate_records, ArchitectureRecord, RankingConfig, RankingTask, REFERENCE_PROXY};
pub use regression::{regression_target, RegressionConfig, RegressionTask, REGRESSION_TARGET};
pub use spearman::{rank_average, spearman, spearman_detail, Correlation, SpearmanError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("expected {expected} output, got {got}")]
    Shape { expected: String, got: String },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Correlation(#[from] SpearmanError),
}

pub trait Task {
    fn name(&self) -> &'static str;

    /// Names the candidate may reference, with their kinds.
    fn inputs(&self) -> Vec<(String, Kind)>;

    /// Kind of value a candidate must produce per record.
    fn output_kind(&self) -> Kind;

    /// Runs the candidate on the task's batches. Larger is better.
    fn score(&self, candidate: &mut dyn Candidate) -> Result<f64, TaskError>;

    /// Short plain-text summary for prompts.
    fn describe(&self) -> String;

    fn batches(&self) -> Vec<&Batch>;

    /// A one-path starting lattice.
    fn seed_lattice(&self) -> Lattice;

    fn input_names(&self) -> Vec<String> {
        self.inputs().into_iter().map(|(n, _)| n).collect()
    }

    /// Digest of the batch contents, for checking that two runs saw the same data.
    fn batch_digest(&self) -> String {
        let mut h = Sha256::new();
        for b in self.batches() {
            h.update(b.token.0);
            for (name, col) in &b.columns {
                h.update(name.as_bytes());
                h.update([0]);
                for v in col {
                    for x in v.as_slice() {
                        h.update(x.to_bits().to_le_bytes());
                    }
                    h.update([0xff]);
                }
            }
        }
        hex::encode(h.finalize())
    }
}

/// Task selection and parameters as they appear in a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum TaskConfig {
    Ranking(RankingConfig),
    Optimizer(OptimizerConfig),
    Regression(RegressionConfig),
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig::Ranking(RankingConfig::default())
    }
}

impl TaskConfig {
    pub fn build(&self, seed: u64) -> Box<dyn Task> {
        match self {
            TaskConfig::Ranking(c) => Box::new(RankingTask::new(c.clone(), seed)),
            TaskConfig::Optimizer(c) => Box::new(OptimizerTask::new(c.clone(), seed)),
            TaskConfig::Regression(c) => Box::new(RegressionTask::new(c.clone(), seed)),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            TaskConfig::Ranking(c) => c.validate(),
            TaskConfig::Optimizer(c) => c.validate(),
            TaskConfig::Regression(c) => c.validate(),
        }
    }
}

/// Runs a candidate and checks that every record produced a scalar.
pub(crate) fn run_scalars(candidate: &mut dyn Candidate, batch: &Batch) -> Result<Vec<f64>, TaskError> {
    candidate
        .run(batch)?
        .into_iter()
        .map(|v| match v {
            Value::Scalar(x) => Ok(x),
            other => Err(TaskError::Shape {
                expected: "scalar".into(),
                got: format!("vector of length {}", other.as_slice().len()),
            }),
        })
        .collect()
}

pub(crate) fn finite_score(x: f64) -> Result<f64, TaskError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(TaskError::NonFinite("score"))
    }
}
