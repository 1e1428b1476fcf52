use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evolattice::config::RunConfig;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures/zerolm_minimal.lattice");

fn evolattice(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evolattice"))
        .args(args.iter().map(|a| a.as_ref()))
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Regression task with a scripted oracle whose first two plans improve the fit.
fn scripted_config(dir: &Path, steps: usize) -> PathBuf {
    let out = dir.join("run");
    let text = format!(
        r#"steps = {steps}
output_dir = "{}"

[seeds]
master = 9

[task]
name = "regression"

[oracle]
kind = "replay"
plans = [
    [{{ op = "add_alternative", node = "output", source = "lambda x: tanh(x)" }}],
    [{{ op = "add_alternative", node = "output", source = "lambda x: tanh(2 * x) - 0.4 * x" }}],
]
"#,
        out.display()
    );
    write(dir, "run.toml", &text)
}

#[test]
fn scripted_regression_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scripted_config(dir.path(), 5);
    let o = evolattice(&[&"run", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let metrics = fs::read_to_string(dir.path().join("run/metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 5);
    assert_eq!(fs::read_to_string(dir.path().join("run/steps.jsonl")).unwrap().lines().count(), 5);
    assert!(stdout(&o).contains("2 accepted"), "{}", stdout(&o));
    assert!(!dir.path().join("run/run.lock").exists());
}

#[test]
fn unknown_task_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "steps = 1\n[task]\nname = \"imagenet\"\n");
    let o = evolattice(&[&"run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("task.name"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_exits_two() {
    let o = evolattice(&[&"run", &"/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dry_run_prints_resolved_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let cfg = write(dir.path(), "min.toml", &format!("output_dir = {:?}\n", out.display().to_string()));
    let o = evolattice(&[&"run", &"--dry-run", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!out.exists());
    let printed = RunConfig::from_toml(&stdout(&o)).unwrap();
    let expected = RunConfig {
        output_dir: out.clone(),
        ..Default::default()
    }
    .resolved();
    assert_eq!(printed, expected);
    let text = stdout(&o);
    for line in [
        "steps = 10",
        "mode = \"lattice\"",
        "path_budget = 64",
        "importance_sigma = 0.01",
        "importance_samples = 16",
        "retain_unreachable = false",
        "name = \"ranking\"",
        "kind = \"grammar\"",
        "hypothesis_temperature = 0.5",
        "mutation_temperature = 0.0",
        "retry_budget = 2",
    ] {
        assert!(text.lines().any(|l| l == line), "missing `{line}` in\n{text}");
    }
}

#[test]
fn inspect_fixture() {
    let o = evolattice(&[&"inspect", &FIXTURE]);
    let text = stdout(&o);
    assert!(text.contains("paths: 8"), "{text}");
    assert!(text.contains("nodes: 4"));
    for node in ["spec_top1_vec", "spectral_stability", "zerolm_core", "output"] {
        assert!(text.contains(&format!("  {node} (2 alternatives)")), "{node}");
    }
    // the unreachable node is a reported violation
    assert!(text.contains("spec_top1_vec: unreachable"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn inspect_single_node_and_broken_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let one = write(dir.path(), "one.lattice", "output:\n- \"lambda x:\n    x\n  # name: output_0\"\n");
    let o = evolattice(&[&"inspect", &one]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("paths: 1"));

    let headless = write(dir.path(), "headless.lattice", "a:\n- \"lambda x:\n    x\n  # name: a_0\"\n");
    let o = evolattice(&[&"inspect", &headless]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("violations:"), "{}", stdout(&o));

    let garbage = write(dir.path(), "garbage.lattice", "output:\n- \"lambda x: (\n");
    assert_eq!(evolattice(&[&"inspect", &garbage]).status.code(), Some(2));
}

#[test]
fn diff_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let base = fs::read_to_string(FIXTURE).unwrap();
    let same = write(dir.path(), "same.lattice", &base);
    let o = evolattice(&[&"diff", &FIXTURE, &same]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).is_empty());

    let added = format!("{base}- \"lambda zerolm_core:\n    2 * zerolm_core\n  # name: output_2\"\n");
    let added = write(dir.path(), "added.lattice", &added);
    let o = evolattice(&[&"diff", &FIXTURE, &added]);
    assert_eq!(o.status.code(), Some(1));
    let body: Vec<String> = stdout(&o)
        .lines()
        .filter(|l| !l.starts_with("---") && !l.starts_with("+++") && !l.starts_with("@@"))
        .map(String::from)
        .collect();
    assert!(body.iter().all(|l| !l.starts_with('-')), "{body:?}");
    let plus: Vec<&String> = body.iter().filter(|l| l.starts_with('+')).collect();
    assert_eq!(plus.len(), 3);
    assert!(plus.iter().any(|l| l.contains("output_2")));

    let start = base.find("spec_top1_vec:").unwrap();
    let end = base.find("spectral_stability:").unwrap();
    let removed = write(dir.path(), "removed.lattice", &format!("{}{}", &base[..start], &base[end..]));
    let o = evolattice(&[&"diff", &FIXTURE, &removed]);
    assert_eq!(o.status.code(), Some(1));
    let minus: Vec<String> = stdout(&o).lines().filter(|l| l.starts_with('-') && !l.starts_with("---")).map(String::from).collect();
    assert_eq!(minus.len(), base[start..end].lines().count());
    assert!(stdout(&o).lines().all(|l| !l.starts_with('+') || l.starts_with("+++")));

    let bad = write(dir.path(), "bad.lattice", "output:\n- \"oops\"\n");
    assert_eq!(evolattice(&[&"diff", &FIXTURE, &bad]).status.code(), Some(2));
}

#[test]
fn replay_stats_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scripted_config(dir.path(), 4);
    assert_eq!(evolattice(&[&"run", &cfg]).status.code(), Some(0));
    let run = dir.path().join("run");

    let o = evolattice(&[&"replay", &run]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = evolattice(&[&"stats", &run, &"--csv"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 5);

    let t = run.join("transcripts/step_000002_mut.txt");
    let text = fs::read_to_string(&t).unwrap();
    let (head, _) = text.split_once("@@@ 0 response\n").unwrap();
    fs::write(&t, format!("{head}@@@ 0 response\n```json\n[]\n```\n")).unwrap();
    let o = evolattice(&[&"replay", &run]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("diverge at step 2"), "{}", stdout(&o));

    fs::remove_file(&t).unwrap();
    assert_eq!(evolattice(&[&"replay", &run]).status.code(), Some(2));

    let o = evolattice(&[&"tasks", &"export", &"regression"]);
    assert_eq!(o.status.code(), Some(0));
    // one record whose input x is the whole 64-point grid
    let csv = stdout(&o);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "batch,record,x");
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1].split(';').count(), 64);
    assert_eq!(evolattice(&[&"tasks", &"export", &"cifar"]).status.code(), Some(2));
}
