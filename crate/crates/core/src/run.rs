//! Run orchestration and the on-disk run directory.
//!
//! ```text
//! <output_dir>/
//!   config.toml          resolved configuration
//!   run_info.json        timestamps and batch digest (the only wall-clock data)
//!   initial.lattice      copy of `initial_lattice`, when one was given
//!   metrics.jsonl        one MetricsRow per step
//!   steps.jsonl          one StepRecord per step
//!   step_000000.lattice  starting lattice; later files only for accepted steps
//!   transcripts/         step_<n>_{hypo,mut}.txt
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;
use thiserror::Error;

use crate::baseline::{inline_path, Baseline, BaselineMode};
use crate::config::{ConfigError, Mode, OracleKind, RunConfig};
use crate::engine::{evaluate_lattice, GlobalCache};
use crate::evolution::{EvolutionError, EvolutionSettings, Evolver, MetricsRow, MutationPlan, RunState, StepRecord};
use crate::lattice::{deserialize_snapshot, serialize_snapshot, snapshot_file_name, validate, Lattice};
use crate::oracle::{
    ChatBackend, FuzzBackend, GrammarSampler, LlmBackend, Oracle, OracleSettings, ScriptedBackend, TranscriptBackend,
};
use crate::seed::derive_seed;
use crate::tasks::Task;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const STEPS_FILE: &str = "steps.jsonl";
pub const CONFIG_FILE: &str = "config.toml";
pub const INITIAL_FILE: &str = "initial.lattice";
pub const LOCK_FILE: &str = "run.lock";
pub const TRANSCRIPT_DIR: &str = "transcripts";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0} is locked by another run")]
    Locked(PathBuf),
    #[error("{0} already holds a run")]
    Exists(PathBuf),
    #[error("{0}")]
    MissingTranscript(String),
    #[error("cannot write transcript: {0}")]
    Transcript(String),
}

impl RunError {
    /// 2 for configuration problems and missing transcripts, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::MissingTranscript(_) => 2,
            _ => 1,
        }
    }
}

impl From<EvolutionError> for RunError {
    fn from(e: EvolutionError) -> Self {
        match e {
            EvolutionError::MissingTranscript(m) => RunError::MissingTranscript(m),
            EvolutionError::Transcript(m) => RunError::Transcript(m),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub rows: Vec<MetricsRow>,
    pub accepted: usize,
    pub best_so_far: Option<f64>,
    /// Final lattice (a single-node lattice for baselines).
    pub lattice: Lattice,
    pub batch_digest: String,
}

fn read_plans(path: &Path) -> Result<Vec<MutationPlan>, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| ConfigError::Invalid(format!("oracle.script {}: {e}", path.display())))
}

/// The proposal backend named by the configuration.
pub fn build_backend(config: &RunConfig) -> Result<Box<dyn ChatBackend>, ConfigError> {
    let o = &config.oracle;
    Ok(match o.kind {
        OracleKind::Grammar => Box::new(GrammarSampler::new(config.oracle_seed())),
        OracleKind::Fuzz => Box::new(FuzzBackend::new(config.oracle_seed())),
        OracleKind::Llm => Box::new(LlmBackend::new(o.llm_settings())),
        OracleKind::Replay => {
            let mut plans = o.plans.clone();
            if let Some(p) = &o.script {
                plans.extend(read_plans(p)?);
            }
            Box::new(ScriptedBackend::new(plans, o.hypotheses.clone()))
        }
    })
}

fn initial_lattice(config: &RunConfig, task: &dyn Task) -> Result<(Lattice, Option<String>), ConfigError> {
    let Some(path) = &config.initial_lattice else {
        return Ok((task.seed_lattice(), None));
    };
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.clone(),
        source,
    })?;
    let l = deserialize_snapshot(&text)
        .map_err(|e| ConfigError::Invalid(format!("initial_lattice {}: {e}", path.display())))?
        .with_inputs(task.input_names());
    let report = validate(&l);
    if !report.is_ok() {
        return Err(ConfigError::Invalid(format!(
            "initial_lattice {} is not valid:\n{report}",
            path.display()
        )));
    }
    Ok((l, Some(text)))
}

/// Removes the lock file when the run ends, however it ends.
struct Lock(PathBuf);

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

struct Writer {
    dir: PathBuf,
    metrics: File,
    steps: File,
}

impl Writer {
    fn append(file: &mut File, path: &Path, line: &str) -> Result<(), RunError> {
        // one write per line keeps every prefix of the file valid JSONL
        file.write_all(format!("{line}\n").as_bytes())
            .and_then(|_| file.flush())
            .map_err(io_err(path))
    }

    fn step(&mut self, record: &StepRecord, row: &MetricsRow) -> Result<(), RunError> {
        let rec = serde_json::to_string(record).expect("record serializes");
        Self::append(&mut self.steps, &self.dir.join(STEPS_FILE), &rec)?;
        Self::append(&mut self.metrics, &self.dir.join(METRICS_FILE), &row.to_json())
    }

    fn snapshot(&self, step: usize, l: &Lattice) -> Result<(), RunError> {
        let p = self.dir.join(snapshot_file_name(step));
        fs::write(&p, serialize_snapshot(l)).map_err(io_err(&p))
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Runs with the configured backend into `config.output_dir`.
pub fn run(config: &RunConfig) -> Result<RunSummary, RunError> {
    let backend = build_backend(config)?;
    run_with(config, &config.output_dir, backend)
}

/// Runs into `out` with an explicit proposal backend.
pub fn run_with(config: &RunConfig, out: &Path, backend: Box<dyn ChatBackend>) -> Result<RunSummary, RunError> {
    config.validate()?;
    let task = config.task.build(config.seeds.batch());
    let (start, initial_text) = initial_lattice(config, task.as_ref())?;

    fs::create_dir_all(out).map_err(io_err(out))?;
    let lock_path = out.join(LOCK_FILE);
    OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&lock_path)
        .map_err(|e| match e.kind() {
            io::ErrorKind::AlreadyExists => RunError::Locked(out.to_path_buf()),
            _ => io_err(&lock_path)(e),
        })?;
    let _lock = Lock(lock_path);
    if out.join(METRICS_FILE).exists() {
        return Err(RunError::Exists(out.to_path_buf()));
    }

    let resolved = config.resolved();
    let cfg_path = out.join(CONFIG_FILE);
    fs::write(&cfg_path, resolved.to_toml()).map_err(io_err(&cfg_path))?;
    if let Some(text) = &initial_text {
        let p = out.join(INITIAL_FILE);
        fs::write(&p, text).map_err(io_err(&p))?;
    }
    let digest = task.batch_digest();
    let info_path = out.join("run_info.json");
    let started = now();
    let info = |finished: Option<u64>, accepted: usize| {
        json!({
            "version": env!("CARGO_PKG_VERSION"),
            "started_unix": started,
            "finished_unix": finished,
            "mode": resolved.mode,
            "oracle": resolved.oracle.kind,
            "task": task.name(),
            "batch_digest": digest,
            "steps": resolved.steps,
            "accepted": accepted,
        })
    };
    let write_info = |v: serde_json::Value| {
        fs::write(&info_path, serde_json::to_string_pretty(&v).expect("json")).map_err(io_err(&info_path))
    };
    write_info(info(None, 0))?;

    let create = |name: &str| {
        let p = out.join(name);
        File::create(&p).map_err(io_err(&p))
    };
    let mut w = Writer {
        dir: out.to_path_buf(),
        metrics: create(METRICS_FILE)?,
        steps: create(STEPS_FILE)?,
    };

    let cache = GlobalCache::new(config.cache_entries);
    let settings = OracleSettings {
        hypothesis_temperature: config.oracle.hypothesis_temperature,
        mutation_temperature: config.oracle.mutation_temperature,
        retry_budget: config.oracle.retry_budget,
    };
    let oracle = Oracle::new(backend, settings).with_transcripts(out.join(TRANSCRIPT_DIR));
    let sampler_seed = config.seeds.sampler();

    let mut rows = Vec::new();
    let mut accepted = 0;
    let (best_so_far, lattice) = match config.mode {
        Mode::Lattice => {
            let mut ev = Evolver {
                task: task.as_ref(),
                cache: &cache,
                oracle,
                settings: EvolutionSettings {
                    path_budget: config.path_budget,
                    retain_unreachable: config.retain_unreachable,
                    importance_sigma: config.importance_sigma,
                    importance_samples: config.importance_samples,
                    sampler_seed,
                },
                transcript_prefix: Some(TRANSCRIPT_DIR.into()),
            };
            let mut state = RunState::new(start);
            ev.initialize(&mut state);
            w.snapshot(0, &state.lattice)?;
            for _ in 0..config.steps {
                let (record, row) = ev.step(&mut state)?;
                w.step(&record, &row)?;
                if record.accepted {
                    accepted += 1;
                    w.snapshot(record.step, &state.lattice)?;
                }
                rows.push(row);
            }
            (state.best_so_far, state.lattice)
        }
        Mode::Regenerate | Mode::Diff => {
            let mode = if config.mode == Mode::Diff {
                BaselineMode::Diff
            } else {
                BaselineMode::Regenerate
            };
            let seed = derive_seed(sampler_seed, "step/0");
            let report = evaluate_lattice(&start, task.as_ref(), config.path_budget, seed, None, &cache);
            let source = report
                .best()
                .and_then(|(p, _)| inline_path(&start, p))
                .ok_or_else(|| ConfigError::Invalid("the starting lattice has no scoring path".into()))?
                .to_string();
            let mut b = Baseline::new(task.as_ref(), &cache, oracle, mode, sampler_seed, source);
            w.snapshot(0, &b.lattice(None))?;
            for _ in 0..config.steps {
                let (mut record, row) = b.step()?;
                record.transcripts = vec![format!("{TRANSCRIPT_DIR}/step_{:06}_mut.txt", record.step)];
                w.step(&record, &row)?;
                if record.accepted {
                    accepted += 1;
                    w.snapshot(record.step, &b.lattice(None))?;
                }
                rows.push(row);
            }
            (b.candidate.score, b.lattice(None))
        }
    };
    write_info(info(Some(now()), accepted))?;
    Ok(RunSummary {
        output_dir: out.to_path_buf(),
        rows,
        accepted,
        best_so_far,
        lattice,
        batch_digest: digest,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub identical: bool,
    /// First step whose metrics line differs (or is missing on one side).
    pub first_divergence: Option<usize>,
}

/// Re-executes a run from its transcripts in a scratch directory and compares `metrics.jsonl` byte for byte.
pub fn replay(run_dir: &Path) -> Result<ReplayOutcome, RunError> {
    let mut config = RunConfig::load(&run_dir.join(CONFIG_FILE))?;
    if config.initial_lattice.is_some() {
        config.initial_lattice = Some(run_dir.join(INITIAL_FILE));
    }
    let transcripts = run_dir.join(TRANSCRIPT_DIR);
    if !transcripts.is_dir() && config.steps > 0 {
        return Err(RunError::MissingTranscript(format!("{} does not exist", transcripts.display())));
    }
    let scratch = tempfile::tempdir().map_err(io_err(run_dir))?;
    run_with(&config, scratch.path(), Box::new(TranscriptBackend::new(transcripts)))?;

    let recorded_path = run_dir.join(METRICS_FILE);
    let recorded = fs::read(&recorded_path).map_err(io_err(&recorded_path))?;
    let fresh = fs::read(scratch.path().join(METRICS_FILE)).map_err(io_err(scratch.path()))?;
    if recorded == fresh {
        return Ok(ReplayOutcome {
            identical: true,
            first_divergence: None,
        });
    }
    let a: Vec<&[u8]> = recorded.split(|b| *b == b'\n').collect();
    let b: Vec<&[u8]> = fresh.split(|b| *b == b'\n').collect();
    let line = (0..a.len().max(b.len()))
        .find(|&i| a.get(i) != b.get(i))
        .unwrap_or(0);
    Ok(ReplayOutcome {
        identical: false,
        first_divergence: Some(line + 1),
    })
}
