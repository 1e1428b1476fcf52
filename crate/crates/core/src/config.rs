//! Run configuration, stored as TOML.
//!
//! ```toml
//! steps = 50
//! mode = "lattice"          # lattice | regenerate | diff
//! output_dir = "runs/demo"
//!
//! [seeds]
//! master = 7
//!
//! [task]
//! name = "ranking"
//!
//! [oracle]
//! kind = "grammar"          # grammar | replay | llm | fuzz
//! ```
//!
//! Every field has a default. Unset `seeds.batch`, `seeds.sampler` and
//! `oracle.seed` are derived from `seeds.master`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::DEFAULT_CACHE_ENTRIES;
use crate::evolution::MutationPlan;
use crate::oracle::LlmSettings;
use crate::seed::derive_seed;
use crate::tasks::TaskConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Lattice,
    Regenerate,
    Diff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    #[default]
    Grammar,
    Replay,
    Llm,
    Fuzz,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub master: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampler: Option<u64>,
}

/// Derived seeds keep to 63 bits so they fit a TOML integer.
fn derived(master: u64, label: &str) -> u64 {
    derive_seed(master, label) & i64::MAX as u64
}

impl Seeds {
    pub fn batch(&self) -> u64 {
        self.batch.unwrap_or_else(|| derived(self.master, "batch"))
    }

    pub fn sampler(&self) -> u64 {
        self.sampler.unwrap_or_else(|| derived(self.master, "sampler"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub kind: OracleKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Replay oracle: hypothesis lines returned verbatim.
    pub hypotheses: Vec<String>,
    /// Replay oracle: plan for step `n` is `plans[n - 1]`.
    pub plans: Vec<MutationPlan>,
    /// Replay oracle: JSON file holding an array of plans, appended to `plans`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    pub endpoint: String,
    pub model: String,
    pub hypothesis_temperature: f64,
    pub mutation_temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub retry_budget: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        let llm = LlmSettings::default();
        OracleConfig {
            kind: OracleKind::Grammar,
            seed: None,
            hypotheses: Vec::new(),
            plans: Vec::new(),
            script: None,
            endpoint: llm.endpoint,
            model: llm.model,
            hypothesis_temperature: 0.5,
            mutation_temperature: 0.0,
            max_tokens: llm.max_tokens,
            timeout_secs: llm.timeout_secs,
            retry_budget: 2,
        }
    }
}

impl OracleConfig {
    pub fn llm_settings(&self) -> LlmSettings {
        LlmSettings {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            max_tokens: self.max_tokens,
            timeout_secs: self.timeout_secs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub steps: usize,
    pub mode: Mode,
    pub output_dir: PathBuf,
    pub path_budget: usize,
    pub retain_unreachable: bool,
    pub cache_entries: usize,
    pub importance_sigma: f64,
    pub importance_samples: usize,
    /// Snapshot to start from instead of the task's seed lattice.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_lattice: Option<PathBuf>,
    pub seeds: Seeds,
    pub task: TaskConfig,
    pub oracle: OracleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            steps: 10,
            mode: Mode::Lattice,
            output_dir: PathBuf::from("runs/default"),
            path_budget: 64,
            retain_unreachable: false,
            cache_entries: DEFAULT_CACHE_ENTRIES,
            importance_sigma: 0.01,
            importance_samples: 16,
            initial_lattice: None,
            seeds: Seeds::default(),
            task: TaskConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        // the path names the offending key even when serde's message does not
        let c: RunConfig = serde_path_to_error::deserialize(toml::Deserializer::new(text)).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                ConfigError::Parse(inner.to_string())
            } else {
                ConfigError::Parse(format!("field `{path}`: {inner}"))
            }
        })?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Copy with every derived seed written out.
    pub fn resolved(&self) -> RunConfig {
        let mut c = self.clone();
        c.seeds.batch = Some(self.seeds.batch());
        c.seeds.sampler = Some(self.seeds.sampler());
        c.oracle.seed = Some(self.oracle_seed());
        c
    }

    pub fn oracle_seed(&self) -> u64 {
        self.oracle.seed.unwrap_or_else(|| derived(self.seeds.master, "oracle"))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.path_budget == 0 {
            return bad("path_budget must be at least 1".into());
        }
        if !(self.importance_sigma.is_finite() && self.importance_sigma >= 0.0) {
            return bad("importance_sigma must be a non-negative number".into());
        }
        for (name, t) in [
            ("oracle.hypothesis_temperature", self.oracle.hypothesis_temperature),
            ("oracle.mutation_temperature", self.oracle.mutation_temperature),
        ] {
            if !(0.0..=2.0).contains(&t) {
                return bad(format!("{name} must be in [0, 2], got {t}"));
            }
        }
        if self.oracle.kind == OracleKind::Llm && self.oracle.endpoint.trim().is_empty() {
            return bad("oracle.endpoint is required for the llm oracle".into());
        }
        if self.output_dir.as_os_str().is_empty() {
            return bad("output_dir must not be empty".into());
        }
        self.task.validate().map_err(|e| ConfigError::Invalid(format!("task: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.oracle.kind = OracleKind::Replay;
        c.oracle.plans = vec![
            serde_json::from_str(r#"[{"op":"add_alternative","node":"output","source":"lambda loss: -loss"}]"#).unwrap(),
            MutationPlan::default(),
        ];
        let c = c.resolved();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_task_names_the_field() {
        let e = RunConfig::from_toml("[task]\nname = \"nope\"\n").unwrap_err().to_string();
        assert!(e.contains("name") && e.contains("nope"), "{e}");
    }

    #[test]
    fn temperature_range() {
        let e = RunConfig::from_toml("[oracle]\nmutation_temperature = 3.0\n").unwrap_err();
        assert!(e.to_string().contains("mutation_temperature"));
    }
}
