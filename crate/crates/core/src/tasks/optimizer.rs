//! Training-free update rule discovery.
//!
//! Each probe is a diagonal positive-definite quadratic with a smooth
//! cosine ripple,
//!
//! ```text
//! L(x) = sum_i  eig_i / 2 * (x_i - c_i)^2 + kappa * (1 - cos(x_i - c_i))
//! ```
//!
//! evaluated at a random point `w`. A candidate sees the gradient `g`, the
//! diagonal curvature `h` and `w` and returns an update `dw`. The update is
//! applied to a scratch copy of `w` only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{finite_score, Task, TaskError};
use crate::engine::{Batch, BatchToken, Candidate};
use crate::expr::{Kind, Value};
use crate::lattice::Lattice;
use crate::seed::derive_seed;

/// Handcrafted update rules, by name.
pub const OPTIMIZER_BASELINES: [(&str, &str); 6] = [
    ("sgd", "lambda g: -0.01 * g"),
    ("sign", "lambda g: -0.01 * sign(g)"),
    ("curvature", "lambda g, h: -0.01 * g / (sqrt(h) + 0.000001)"),
    (
        "sign_curvature_linear",
        "lambda g, h: 0.5 * (-0.01 * sign(g)) + 0.5 * (-0.01 * g / (sqrt(h) + 0.000001))",
    ),
    (
        "sign_curvature_gated",
        "lambda g, h: -0.01 * sign(g) * sigmoid(abs(g) / (sqrt(h) + 0.000001))",
    ),
    (
        "discovered",
        "lambda g, h, w: -tanh(sign(g) * (1 + 0.001 * sum(abs(w))))
    + (-0.01 * sigmoid(g / (sqrt(h) + 0.000001)) + 0.01 * sign(g) * (1 + 0.1 * var(h)))",
    ),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub dim: usize,
    pub probes: usize,
    /// Quadratic eigenvalues are log-uniform on `[eig_min, eig_max]`.
    pub eig_min: f64,
    pub eig_max: f64,
    /// Weight `kappa` of the cosine ripple.
    pub perturbation: f64,
    pub lambda_align: f64,
    pub lambda_sharp: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            dim: 16,
            probes: 8,
            eig_min: 0.5,
            eig_max: 500.0,
            perturbation: 0.1,
            lambda_align: 0.1,
            lambda_sharp: 0.1,
            epsilon: 0.01,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.dim == 0 || self.probes == 0 {
            return Err("task.dim and task.probes must be positive".into());
        }
        if !(self.eig_min > 0.0 && self.eig_min <= self.eig_max) {
            return Err("task.eig_min must be positive and at most task.eig_max".into());
        }
        if !(self.perturbation >= 0.0 && self.perturbation < self.eig_min) {
            // keeps the curvature strictly positive
            return Err("task.perturbation must be in [0, task.eig_min)".into());
        }
        if !(self.epsilon > 0.0) {
            return Err("task.epsilon must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub center: Vec<f64>,
    pub eig: Vec<f64>,
    pub kappa: f64,
    pub w: Vec<f64>,
}

impl Probe {
    pub fn loss(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..x.len() {
            let d = x[i] - self.center[i];
            total += 0.5 * self.eig[i] * d * d + self.kappa * (1.0 - d.cos());
        }
        total
    }

    pub fn gradient(&self) -> Vec<f64> {
        (0..self.w.len())
            .map(|i| {
                let d = self.w[i] - self.center[i];
                self.eig[i] * d + self.kappa * d.sin()
            })
            .collect()
    }

    pub fn curvature(&self) -> Vec<f64> {
        (0..self.w.len())
            .map(|i| self.eig[i] + self.kappa * (self.w[i] - self.center[i]).cos())
            .collect()
    }

    /// Largest loss increase over the `2 * dim` coordinate steps of size `epsilon` from `x`.
    pub fn sharpness(&self, x: &[f64], epsilon: f64) -> f64 {
        let base = self.loss(x);
        let mut probe = x.to_vec();
        let mut worst = f64::NEG_INFINITY;
        for i in 0..x.len() {
            for s in [epsilon, -epsilon] {
                probe[i] = x[i] + s;
                worst = worst.max(self.loss(&probe) - base);
            }
            probe[i] = x[i];
        }
        worst
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub struct OptimizerTask {
    pub config: OptimizerConfig,
    pub probes: Vec<Probe>,
    batch: Batch,
}

impl OptimizerTask {
    pub fn new(config: OptimizerConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "optimizer"));
        let (lo, hi) = (config.eig_min.ln(), config.eig_max.ln());
        let probes: Vec<Probe> = (0..config.probes)
            .map(|_| {
                let mut center = Vec::with_capacity(config.dim);
                let mut eig = Vec::with_capacity(config.dim);
                let mut w = Vec::with_capacity(config.dim);
                for _ in 0..config.dim {
                    center.push(rng.sample::<f64, _>(StandardNormal));
                    eig.push(if lo == hi { config.eig_min } else { rng.random_range(lo..hi).exp() });
                    w.push(rng.sample::<f64, _>(StandardNormal));
                }
                Probe {
                    center,
                    eig,
                    kappa: config.perturbation,
                    w,
                }
            })
            .collect();
        let records = probes
            .iter()
            .map(|p| {
                vec![
                    ("g".to_string(), Value::Vector(p.gradient())),
                    ("h".to_string(), Value::Vector(p.curvature())),
                    ("w".to_string(), Value::Vector(p.w.clone())),
                ]
            })
            .collect();
        let batch = Batch::from_records(BatchToken::new(seed, "optimizer"), records);
        OptimizerTask { config, probes, batch }
    }

    /// Scores a list of updates, one per probe.
    pub fn score_updates(&self, updates: &[Value]) -> Result<f64, TaskError> {
        let dim = self.config.dim;
        let mut total = 0.0;
        for (probe, dw) in self.probes.iter().zip(updates) {
            let dw: Vec<f64> = match dw {
                Value::Scalar(x) => vec![*x; dim],
                Value::Vector(v) if v.len() == dim => v.clone(),
                Value::Vector(v) => {
                    return Err(TaskError::Shape {
                        expected: format!("vector of length {dim}"),
                        got: format!("vector of length {}", v.len()),
                    })
                }
            };
            let moved: Vec<f64> = probe.w.iter().zip(&dw).map(|(a, b)| a + b).collect();
            let before = probe.loss(&probe.w);
            let after = probe.loss(&moved);
            if !after.is_finite() {
                return Err(TaskError::NonFinite("loss"));
            }
            let neg_g: Vec<f64> = probe.gradient().iter().map(|x| -x).collect();
            let align = 1.0 - cosine(&dw, &neg_g);
            let sharp = probe.sharpness(&moved, self.config.epsilon);
            total += (before - after) - self.config.lambda_align * align - self.config.lambda_sharp * sharp;
        }
        finite_score(total / self.probes.len() as f64)
    }
}

impl Task for OptimizerTask {
    fn name(&self) -> &'static str {
        "optimizer"
    }

    fn inputs(&self) -> Vec<(String, Kind)> {
        vec![
            ("g".into(), Kind::Vector),
            ("h".into(), Kind::Vector),
            ("w".into(), Kind::Vector),
        ]
    }

    fn output_kind(&self) -> Kind {
        Kind::Vector
    }

    fn score(&self, candidate: &mut dyn Candidate) -> Result<f64, TaskError> {
        let out = candidate.run(&self.batch)?;
        self.score_updates(&out)
    }

    fn describe(&self) -> String {
        format!(
            "Single-step update rule discovery. Inputs per probe objective: g (gradient), \
             h (positive diagonal curvature) and w (parameters), all vectors of length {}. \
             The output is the update dw (a vector of the same length, or a scalar applied to \
             every coordinate). Score = mean over {} probes of loss decrease after w + dw, minus \
             {} * (1 - cos(dw, -g)) and minus {} * the worst loss increase over coordinate steps \
             of size {} around w + dw.",
            self.config.dim, self.config.probes, self.config.lambda_align, self.config.lambda_sharp, self.config.epsilon
        )
    }

    fn batches(&self) -> Vec<&Batch> {
        vec![&self.batch]
    }

    fn seed_lattice(&self) -> Lattice {
        let mut l = Lattice::new(self.input_names());
        l.push("step", "lambda g: 0 * g").expect("seed source");
        l.push("output", "lambda step: step").expect("seed source");
        l
    }
}
