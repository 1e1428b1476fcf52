use std::fmt::Write;

use super::{OracleContext, Purpose};
use crate::lattice::serialize_snapshot;

/// Constant across a run.
pub const SYSTEM_PROMPT: &str = r#"You evolve a lattice of small programs.

The lattice is a set of named nodes. Each node holds one or more alternatives,
and each alternative is a single expression:

    lambda a, b: tanh(a) * (0.7 * b + 0.3)

Parameters name either a task input or another node; naming a node makes the
alternative depend on it. A path picks one alternative per node reachable from
the node `output`, and every path is a complete candidate program. All paths
are scored, and each alternative is summarized by the mean, std and max score
of the paths that contain it.

Expression language: numbers, parameters, + - * / ** (or ^), unary minus,
parentheses and the functions tanh sigmoid exp log log1p sqrt abs sign
clamp(x, lo[, hi]) mean var std sum min max topk(v, k) normalize softmax
entropy pow(x, y) stack(...). Scalars broadcast against vectors. Any NaN,
infinity, division by zero or log of a non-positive number fails the path.

Rules:
- never reference `output` from any alternative;
- never create a dependency cycle;
- every parameter must be a task input or an existing node;
- prefer adding alternatives over deleting them; delete only clearly weak ones.

Reply with one fenced ```json block holding a JSON array of edits:
  {"op": "add_alternative", "node": N, "source": S, "name": optional}
  {"op": "add_node", "name": N, "sources": [S, ...]}
  {"op": "replace_alternative", "node": N, "name": A, "source": S}
  {"op": "delete_alternative", "node": N, "name": A}
Edits apply in order. Text outside the block is ignored."#;

pub const BASELINE_SYSTEM_PROMPT: &str = r#"You improve a single program written as one expression:

    lambda a, b: tanh(a) * (0.7 * b + 0.3)

Parameters must be task inputs. Expression language: numbers, parameters,
+ - * / ** (or ^), unary minus, parentheses and the functions tanh sigmoid exp
log log1p sqrt abs sign clamp(x, lo[, hi]) mean var std sum min max topk(v, k)
normalize softmax entropy pow(x, y) stack(...). Scalars broadcast against
vectors.

Reply with the complete new program in one fenced code block."#;

pub const CORRECTION: &str = "\n\nYour previous reply could not be used: ";

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("none".into(), |v| format!("{v:.4}"))
}

pub fn hypothesis_prompt(ctx: &OracleContext<'_>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Step {}. Task: {}\n", ctx.step, ctx.task_summary);
    let _ = writeln!(s, "Current lattice with per-alternative statistics:\n```\n{}```", serialize_snapshot(ctx.lattice));
    push_importance(&mut s, ctx);
    if !ctx.prev_diff.is_empty() {
        let _ = writeln!(s, "\nPrevious structural change:\n```diff\n{}```", ctx.prev_diff);
    }
    s.push_str(
        "\nList 3 to 5 short, numbered hypotheses about which alternatives to refine, \
         combine or prune next, and why. Do not write edits yet.",
    );
    s
}

fn push_importance(s: &mut String, ctx: &OracleContext<'_>) {
    let _ = writeln!(s, "\nBest score so far: {}", fmt_opt(ctx.best_so_far));
    if let (Some(best), Some(imp)) = (ctx.best_path, ctx.importance) {
        let _ = writeln!(s, "Best path: {}", best.describe(ctx.lattice));
        let _ = writeln!(s, "Node importance on the best path (mean |score change| under small noise):");
        for e in &imp.entries {
            let _ = writeln!(s, "  {}: {}", e.node, e.importance.map_or("failed".into(), |v| format!("{v:.6}")));
        }
    }
}

pub fn mutation_prompt(ctx: &OracleContext<'_>, hypotheses: &[String]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Step {}. Task: {}", ctx.step, ctx.task_summary);
    let inputs: Vec<String> = ctx.task_inputs.iter().map(|(n, k)| format!("{n} ({k})")).collect();
    let _ = writeln!(s, "Task inputs: {}. Output kind: {}.\n", inputs.join(", "), ctx.output_kind);
    let _ = writeln!(s, "Current lattice:\n```\n{}```", serialize_snapshot(ctx.lattice));
    push_importance(&mut s, ctx);
    if !hypotheses.is_empty() {
        s.push_str("\nHypotheses:\n");
        for (i, h) in hypotheses.iter().enumerate() {
            let _ = writeln!(s, "{}. {h}", i + 1);
        }
    }
    if !ctx.prev_diff.is_empty() {
        let _ = writeln!(s, "\nPrevious structural change:\n```diff\n{}```", ctx.prev_diff);
    }
    s.push_str("\nPropose a mutation plan.");
    s
}

pub fn baseline_prompt(ctx: &OracleContext<'_>, purpose: Purpose, current: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Step {}. Task: {}", ctx.step, ctx.task_summary);
    let inputs: Vec<String> = ctx.task_inputs.iter().map(|(n, k)| format!("{n} ({k})")).collect();
    let _ = writeln!(s, "Task inputs: {}. Output kind: {}.", inputs.join(", "), ctx.output_kind);
    let _ = writeln!(s, "Current program (score {}):\n```\n{current}\n```", fmt_opt(ctx.best_so_far));
    match purpose {
        Purpose::Edit => s.push_str("\nEdit the current program to improve its score. Keep the change small."),
        _ => s.push_str("\nWrite a complete new program that scores higher."),
    }
    s
}
