//! Synthetic zero-shot proxy ranking.
//!
//! Each record is a made-up architecture with latent depth `L` (uniform on
//! `min_depth..=max_depth`), width `W` (log-uniform on `min_width..max_width`)
//! and quality `q ~ N(0, 1)`. With `u = ln(W / 256)` and independent standard
//! normals `z`:
//!
//! ```text
//! s                 = 0.15 q + 0.1 u + 0.2 z
//! spec_vec[i]       = exp(s + 0.25 z_i)                  i < L
//! spec_topk_mean    = mean of the 3 largest spec_vec entries
//! spectral_cv_abs   = |std(spec_vec) / mean(spec_vec)|
//! spectral_entropy  = entropy of softmax(spec_vec)
//! cov_sum           = exp(0.25 q + 0.3 ln(L / 6) + 0.5 z)
//! loss              = 2 - 0.1 q - 0.05 u + 0.15 z
//! teacher           = w_loss (-loss) + w_spec mean(spec_vec) + w_cov log1p(cov_sum) + noise z
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{finite_score, run_scalars, spearman_detail, Task, TaskError};
use crate::engine::{Batch, BatchToken, Candidate};
use crate::expr::{Kind, Value};
use crate::lattice::Lattice;
use crate::seed::derive_seed;

/// Transliteration of the best discovered proxy, over the task inputs.
pub const REFERENCE_PROXY: &str = "lambda spec_vec, cov_sum:
    tanh(0.6 * mean(topk(spec_vec, 3))
         + 0.4 * exp(mean(log(clamp(topk(spec_vec, 3), 0.000001)))))
    * (0.7 / (1.0 + abs(sqrt(var(spec_vec) + 0.000001) / (abs(mean(spec_vec)) + 0.001)))
       + 0.3 * sigmoid(log1p(cov_sum)))
    - 0.1 * sum(softmax(spec_vec) * log(softmax(spec_vec) + 0.00000001))";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankingConfig {
    pub phase_a_size: usize,
    pub phase_b_size: usize,
    /// Phase A correlations below this are returned without running phase B.
    pub rho_min: f64,
    pub w_loss: f64,
    pub w_spec: f64,
    pub w_cov: f64,
    pub noise: f64,
    pub min_depth: usize,
    pub max_depth: usize,
    pub min_width: f64,
    pub max_width: f64,
}

impl Default for RankingConfig {
    fn default() -> Self {
        RankingConfig {
            phase_a_size: 64,
            phase_b_size: 384,
            rho_min: 0.02,
            w_loss: 0.5,
            w_spec: 0.3,
            w_cov: 0.2,
            noise: 0.05,
            min_depth: 2,
            max_depth: 12,
            min_width: 64.0,
            max_width: 1024.0,
        }
    }
}

impl RankingConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.phase_a_size < 2 || self.phase_a_size >= self.phase_b_size {
            return Err("task.phase_a_size must be at least 2 and below task.phase_b_size".into());
        }
        if self.min_depth < 1 || self.min_depth > self.max_depth {
            return Err("task.min_depth must be in 1..=task.max_depth".into());
        }
        if !(self.min_width > 0.0 && self.min_width < self.max_width) {
            return Err("task.min_width must be positive and below task.max_width".into());
        }
        if !(self.noise >= 0.0) {
            return Err("task.noise must be non-negative".into());
        }
        Ok(())
    }

    /// The teacher without its noise term, as an expression.
    pub fn teacher_source(&self) -> String {
        format!(
            "lambda loss, spec_vec, cov_sum: {:?} * (-loss) + {:?} * mean(spec_vec) + {:?} * log1p(cov_sum)",
            self.w_loss, self.w_spec, self.w_cov
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureRecord {
    pub depth: usize,
    pub width: f64,
    pub spec_vec: Vec<f64>,
    pub spec_topk_mean: f64,
    pub spectral_cv_abs: f64,
    pub spectral_entropy: f64,
    pub cov_sum: f64,
    pub loss: f64,
    pub teacher: f64,
}

impl ArchitectureRecord {
    fn features(&self) -> Vec<(String, Value)> {
        vec![
            ("spec_vec".into(), Value::Vector(self.spec_vec.clone())),
            ("spec_topk_mean".into(), Value::Scalar(self.spec_topk_mean)),
            ("spectral_cv_abs".into(), Value::Scalar(self.spectral_cv_abs)),
            ("spectral_entropy".into(), Value::Scalar(self.spectral_entropy)),
            ("cov_sum".into(), Value::Scalar(self.cov_sum)),
            ("loss".into(), Value::Scalar(self.loss)),
        ]
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `n` records drawn from a stream determined by `seed` and `phase`.
pub fn generate_records(cfg: &RankingConfig, seed: u64, phase: &str, n: usize) -> Vec<ArchitectureRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("ranking/{phase}")));
    (0..n)
        .map(|_| {
            let depth = rng.random_range(cfg.min_depth..=cfg.max_depth);
            let width = (rng.random_range(cfg.min_width.ln()..cfg.max_width.ln())).exp();
            let q = normal(&mut rng);
            let u = (width / 256.0).ln();
            let s = 0.15 * q + 0.1 * u + 0.2 * normal(&mut rng);
            let spec_vec: Vec<f64> = (0..depth)
                .map(|_| (s + 0.25 * normal(&mut rng)).exp())
                .collect();
            let n = spec_vec.len() as f64;
            let mean = spec_vec.iter().sum::<f64>() / n;
            let var = spec_vec.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let mut sorted = spec_vec.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let k = sorted.len().min(3);
            let spec_topk_mean = sorted[..k].iter().sum::<f64>() / k as f64;
            let m = spec_vec.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = spec_vec.iter().map(|x| (x - m).exp()).collect();
            let z: f64 = e.iter().sum();
            let spectral_entropy = -e.iter().map(|x| x / z).map(|p| p * p.ln()).sum::<f64>();
            let cov_sum = (0.25 * q + 0.3 * (depth as f64 / 6.0).ln() + 0.5 * normal(&mut rng)).exp();
            let loss = 2.0 - 0.1 * q - 0.05 * u + 0.15 * normal(&mut rng);
            let teacher = cfg.w_loss * (-loss) + cfg.w_spec * mean + cfg.w_cov * cov_sum.ln_1p()
                + cfg.noise * normal(&mut rng);
            ArchitectureRecord {
                depth,
                width,
                spectral_cv_abs: (var.sqrt() / mean).abs(),
                spec_vec,
                spec_topk_mean,
                spectral_entropy,
                cov_sum,
                loss,
                teacher,
            }
        })
        .collect()
}

pub struct RankingTask {
    pub config: RankingConfig,
    pub phase_a: Vec<ArchitectureRecord>,
    pub phase_b: Vec<ArchitectureRecord>,
    batch_a: Batch,
    batch_b: Batch,
    teacher_a: Vec<f64>,
    teacher_b: Vec<f64>,
}

fn to_batch(records: &[ArchitectureRecord], token: BatchToken) -> Batch {
    Batch::from_records(token, records.iter().map(ArchitectureRecord::features).collect())
}

impl RankingTask {
    pub fn new(config: RankingConfig, seed: u64) -> Self {
        let phase_a = generate_records(&config, seed, "a", config.phase_a_size);
        let phase_b = generate_records(&config, seed, "b", config.phase_b_size);
        RankingTask {
            batch_a: to_batch(&phase_a, BatchToken::new(seed, "ranking/a")),
            batch_b: to_batch(&phase_b, BatchToken::new(seed, "ranking/b")),
            teacher_a: phase_a.iter().map(|r| r.teacher).collect(),
            teacher_b: phase_b.iter().map(|r| r.teacher).collect(),
            phase_a,
            phase_b,
            config,
        }
    }

    /// Phase B correlation only, skipping the phase A gate.
    pub fn phase_b_rho(&self, candidate: &mut dyn Candidate) -> Result<f64, TaskError> {
        let out = run_scalars(candidate, &self.batch_b)?;
        Ok(spearman_detail(&out, &self.teacher_b)?.rho)
    }

    pub fn phase_a_batch(&self) -> &Batch {
        &self.batch_a
    }

    pub fn phase_b_batch(&self) -> &Batch {
        &self.batch_b
    }
}

impl Task for RankingTask {
    fn name(&self) -> &'static str {
        "ranking"
    }

    fn inputs(&self) -> Vec<(String, Kind)> {
        vec![
            ("spec_vec".into(), Kind::Vector),
            ("spec_topk_mean".into(), Kind::Scalar),
            ("spectral_cv_abs".into(), Kind::Scalar),
            ("spectral_entropy".into(), Kind::Scalar),
            ("cov_sum".into(), Kind::Scalar),
            ("loss".into(), Kind::Scalar),
        ]
    }

    fn output_kind(&self) -> Kind {
        Kind::Scalar
    }

    fn score(&self, candidate: &mut dyn Candidate) -> Result<f64, TaskError> {
        let out = run_scalars(candidate, &self.batch_a)?;
        let rho_a = spearman_detail(&out, &self.teacher_a)?.rho;
        if rho_a < self.config.rho_min {
            return finite_score(rho_a);
        }
        finite_score(self.phase_b_rho(candidate)?)
    }

    fn describe(&self) -> String {
        format!(
            "Zero-shot architecture ranking. Each record is one architecture with inputs \
             spec_vec (vector of per-layer top singular values), spec_topk_mean, spectral_cv_abs, \
             spectral_entropy, cov_sum and loss (scalars). The output must be one scalar proxy \
             score per architecture. Score = Spearman correlation between proxy and a hidden \
             teacher score: first on {} architectures (below {} the candidate is rejected early), \
             then on {} architectures.",
            self.config.phase_a_size, self.config.rho_min, self.config.phase_b_size
        )
    }

    fn batches(&self) -> Vec<&Batch> {
        vec![&self.batch_a, &self.batch_b]
    }

    fn seed_lattice(&self) -> Lattice {
        let mut l = Lattice::new(self.input_names());
        l.push("spectral_stability", "lambda spectral_cv_abs: 1.0 / (1.0 + abs(spectral_cv_abs))")
            .expect("seed source");
        l.push(
            "zerolm_core",
            "lambda spec_topk_mean, spectral_stability, cov_sum:\n    tanh(spec_topk_mean) * (0.7 * spectral_stability + 0.3 * sigmoid(cov_sum))",
        )
        .expect("seed source");
        l.push("output", "lambda zerolm_core: zerolm_core").expect("seed source");
        l
    }
}
