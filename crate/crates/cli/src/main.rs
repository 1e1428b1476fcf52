use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use evolattice::config::RunConfig;
use evolattice::engine::count_paths;
use evolattice::evolution::MetricsRow;
use evolattice::lattice::{deserialize_snapshot, deserialize_snapshot_partial, structural_diff, validate, Lattice, OUTPUT};
use evolattice::run::{self, METRICS_FILE};
use evolattice::tasks::{export_csv, TaskConfig};

#[derive(Parser)]
#[command(name = "evolattice", version, about = "Evolve multi-alternative program lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run evolution (or a single-candidate baseline) as configured.
    Run {
        config: PathBuf,
        /// Validate and print the resolved configuration without running.
        #[arg(long)]
        dry_run: bool,
        /// Overrides `output_dir`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Validate a snapshot and print its structure and statistics.
    ///
    /// Task inputs come from `--task`, else from a `config.toml` beside the
    /// snapshot, else every parameter that names no node is taken as an input.
    Inspect {
        snapshot: PathBuf,
        #[arg(long)]
        task: Option<String>,
    },
    /// Unified diff of two snapshots. Exit 0 if identical, 1 if not.
    Diff { old: PathBuf, new: PathBuf },
    /// Summarize a run's metrics.
    Stats {
        run_dir: PathBuf,
        /// Print every metrics row as CSV instead.
        #[arg(long)]
        csv: bool,
    },
    /// Re-execute a run from its transcripts and compare metrics byte for byte.
    Replay { run_dir: PathBuf },
    /// Task utilities.
    Tasks {
        #[command(subcommand)]
        command: TasksCommand,
    },
}

#[derive(Subcommand)]
enum TasksCommand {
    /// Write a task's input batches as CSV to standard output.
    Export {
        /// ranking, optimizer or regression (default parameters).
        #[arg(required_unless_present = "config")]
        task: Option<String>,
        /// Take task and batch seed from a run configuration instead.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn load_snapshot(path: &Path) -> Result<Lattice, ExitCode> {
    let text = fs::read_to_string(path).map_err(|e| fail(1, format!("{}: {e}", path.display())))?;
    deserialize_snapshot(&text).map_err(|e| fail(2, format!("{}: {e}", path.display())))
}

fn cmd_run(config: &Path, dry_run: bool, output: Option<PathBuf>) -> ExitCode {
    let mut cfg = match RunConfig::load(config) {
        Ok(c) => c,
        Err(e) => return fail(2, e),
    };
    if let Some(o) = output {
        cfg.output_dir = o;
    }
    if dry_run {
        print!("{}", cfg.resolved().to_toml());
        return ExitCode::SUCCESS;
    }
    match run::run(&cfg) {
        Ok(s) => {
            println!(
                "{} steps, {} accepted, best {} -> {}",
                s.rows.len(),
                s.accepted,
                s.best_so_far.map_or("none".into(), |b| format!("{b:.6}")),
                s.output_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.exit_code() as u8, e),
    }
}

fn task_by_name(name: &str) -> Option<TaskConfig> {
    toml::from_str::<TaskConfig>(&format!("name = {name:?}")).ok()
}

fn inspect_inputs(path: &Path, task: Option<&str>, l: &Lattice) -> Result<Vec<String>, ExitCode> {
    if let Some(name) = task {
        let tc = task_by_name(name).ok_or_else(|| fail(2, format!("unknown task `{name}`")))?;
        return Ok(tc.build(0).input_names());
    }
    let beside = path.parent().map(|d| d.join(run::CONFIG_FILE));
    if let Some(cfg) = beside.filter(|p| p.exists()) {
        let c = RunConfig::load(&cfg).map_err(|e| fail(2, e))?;
        return Ok(c.task.build(c.seeds.batch()).input_names());
    }
    let mut free: Vec<String> = l
        .nodes
        .values()
        .flat_map(|n| n.alternatives.iter().flat_map(|a| a.params().iter().cloned()))
        .filter(|p| !l.nodes.contains_key(p) && p != OUTPUT)
        .collect();
    free.sort();
    free.dedup();
    Ok(free)
}

fn cmd_inspect(path: &Path, task: Option<&str>) -> ExitCode {
    // a missing output node is reported as a violation, not a parse error
    let loaded = fs::read_to_string(path)
        .map_err(|e| fail(1, format!("{}: {e}", path.display())))
        .and_then(|t| deserialize_snapshot_partial(&t).map_err(|e| fail(2, format!("{}: {e}", path.display()))));
    let l = match loaded {
        Ok(l) => l,
        Err(c) => return c,
    };
    let inputs = match inspect_inputs(path, task, &l) {
        Ok(i) => i,
        Err(c) => return c,
    };
    let l = l.with_inputs(inputs);
    let report = validate(&l);
    if report.is_ok() {
        println!("valid");
    } else {
        print!("violations:\n{report}");
    }
    println!("paths: {}", count_paths(&l));
    println!("nodes: {}", l.nodes.len());
    for node in l.nodes.values() {
        println!("  {} ({} alternatives)", node.name, node.alternatives.len());
        for a in &node.alternatives {
            match &a.stats {
                Some(s) => println!(
                    "    {:<24} mean={:.4} std={:.4} max={:.4} age={}",
                    a.name, s.mean, s.std, s.max, a.age
                ),
                None => println!("    {:<24} age={}", a.name, a.age),
            }
        }
    }
    if report.is_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_diff(old: &Path, new: &Path) -> ExitCode {
    let (a, b) = match (load_snapshot(old), load_snapshot(new)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(c), _) | (_, Err(c)) => return c,
    };
    let d = structural_diff(&a, &b);
    print!("{}", d.text);
    if d.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn fmt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| format!("{v}"))
}

fn cmd_stats(dir: &Path, csv: bool) -> ExitCode {
    let path = dir.join(METRICS_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => return fail(1, format!("{}: {e}", path.display())),
    };
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        match serde_json::from_str::<MetricsRow>(line) {
            Ok(r) => rows.push(r),
            Err(e) => return fail(2, format!("{}:{}: {e}", path.display(), i + 1)),
        }
    }
    if csv {
        println!("step,best,mean,median,variance,p10,p25,p75,p90,path_total,scored,failed,best_so_far,accepted");
        for r in &rows {
            println!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.step,
                fmt(r.best),
                fmt(r.mean),
                fmt(r.median),
                fmt(r.variance),
                fmt(r.p10),
                fmt(r.p25),
                fmt(r.p75),
                fmt(r.p90),
                r.path_total,
                r.scored,
                r.failed,
                fmt(r.best_so_far),
                r.accepted
            );
        }
        return ExitCode::SUCCESS;
    }
    let accepted = rows.iter().filter(|r| r.accepted).count();
    println!("steps: {}", rows.len());
    println!("accepted: {accepted}");
    if let Some(last) = rows.last() {
        println!("best_so_far: {}", fmt(last.best_so_far));
        println!("final path_total: {}", last.path_total);
        println!("final median: {}", fmt(last.median));
    }
    let first_best = rows.iter().position(|r| r.best_so_far == rows.last().and_then(|l| l.best_so_far));
    if let Some(i) = first_best {
        println!("best reached at step: {}", rows[i].step);
    }
    ExitCode::SUCCESS
}

fn cmd_replay(dir: &Path) -> ExitCode {
    match run::replay(dir) {
        Ok(o) if o.identical => {
            println!("replay matches {}", dir.join(METRICS_FILE).display());
            ExitCode::SUCCESS
        }
        Ok(o) => {
            println!("metrics diverge at step {}", o.first_divergence.unwrap_or(0));
            ExitCode::from(1)
        }
        Err(e) => fail(e.exit_code() as u8, e),
    }
}

fn cmd_export(task: Option<String>, config: Option<PathBuf>, seed: u64) -> ExitCode {
    let (tc, seed) = match config {
        Some(p) => match RunConfig::load(&p) {
            Ok(c) => (c.task.clone(), c.seeds.batch()),
            Err(e) => return fail(2, e),
        },
        None => {
            let name = task.unwrap_or_default();
            match task_by_name(&name) {
                Some(tc) => (tc, seed),
                None => return fail(2, format!("unknown task `{name}` (expected ranking, optimizer or regression)")),
            }
        }
    };
    print!("{}", export_csv(tc.build(seed).as_ref()));
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, dry_run, output } => cmd_run(&config, dry_run, output),
        Command::Inspect { snapshot, task } => cmd_inspect(&snapshot, task.as_deref()),
        Command::Diff { old, new } => cmd_diff(&old, &new),
        Command::Stats { run_dir, csv } => cmd_stats(&run_dir, csv),
        Command::Replay { run_dir } => cmd_replay(&run_dir),
        Command::Tasks {
            command: TasksCommand::Export { task, config, seed },
        } => cmd_export(task, config, seed),
    }
}
