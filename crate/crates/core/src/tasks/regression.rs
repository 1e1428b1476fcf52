//! Symbolic regression of `tanh(2x) - 0.5x` on seeded points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{finite_score, Task, TaskError};
use crate::engine::{Batch, BatchToken, Candidate};
use crate::expr::{Kind, Value};
use crate::lattice::Lattice;
use crate::seed::derive_seed;

pub const REGRESSION_TARGET: &str = "lambda x: tanh(2 * x) - 0.5 * x";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionConfig {
    pub samples: usize,
    pub x_min: f64,
    pub x_max: f64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        RegressionConfig {
            samples: 64,
            x_min: -3.0,
            x_max: 3.0,
        }
    }
}

impl RegressionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.samples == 0 {
            return Err("task.samples must be positive".into());
        }
        if !(self.x_min < self.x_max) {
            return Err("task.x_min must be below task.x_max".into());
        }
        Ok(())
    }
}

pub fn regression_target(x: f64) -> f64 {
    (2.0 * x).tanh() - 0.5 * x
}

pub struct RegressionTask {
    pub config: RegressionConfig,
    pub xs: Vec<f64>,
    pub targets: Vec<f64>,
    batch: Batch,
}

impl RegressionTask {
    pub fn new(config: RegressionConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "regression"));
        let xs: Vec<f64> = (0..config.samples)
            .map(|_| rng.random_range(config.x_min..config.x_max))
            .collect();
        let targets = xs.iter().map(|&x| regression_target(x)).collect();
        let batch = Batch::from_records(
            BatchToken::new(seed, "regression"),
            vec![vec![("x".to_string(), Value::Vector(xs.clone()))]],
        );
        RegressionTask {
            config,
            xs,
            targets,
            batch,
        }
    }

    /// Negative mean squared error of a prediction (scalar predictions are broadcast).
    pub fn score_prediction(&self, pred: &Value) -> Result<f64, TaskError> {
        let n = self.targets.len();
        let at = |i: usize| match pred {
            Value::Scalar(x) => *x,
            Value::Vector(v) => v[i],
        };
        if let Value::Vector(v) = pred {
            if v.len() != n {
                return Err(TaskError::Shape {
                    expected: format!("vector of length {n}"),
                    got: format!("vector of length {}", v.len()),
                });
            }
        }
        let mse = (0..n).map(|i| (at(i) - self.targets[i]).powi(2)).sum::<f64>() / n as f64;
        finite_score(-mse)
    }
}

impl Task for RegressionTask {
    fn name(&self) -> &'static str {
        "regression"
    }

    fn inputs(&self) -> Vec<(String, Kind)> {
        vec![("x".into(), Kind::Vector)]
    }

    fn output_kind(&self) -> Kind {
        Kind::Vector
    }

    fn score(&self, candidate: &mut dyn Candidate) -> Result<f64, TaskError> {
        let out = candidate.run(&self.batch)?;
        self.score_prediction(&out[0])
    }

    fn describe(&self) -> String {
        format!(
            "Symbolic regression. Input x is a vector of {} sample points in [{}, {}]; the output \
             is the vector of predictions. Score = negative mean squared error against a hidden \
             target function.",
            self.config.samples, self.config.x_min, self.config.x_max
        )
    }

    fn batches(&self) -> Vec<&Batch> {
        vec![&self.batch]
    }

    fn seed_lattice(&self) -> Lattice {
        let mut l = Lattice::new(self.input_names());
        l.push("output", "lambda x: x").expect("seed source");
        l
    }
}
