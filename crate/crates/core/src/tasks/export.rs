use std::fmt::Write;

use super::Task;
use crate::expr::Value;

fn cell(v: &Value) -> String {
    match v {
        Value::Scalar(x) => format!("{x}"),
        Value::Vector(xs) => xs.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";"),
    }
}

/// All task batches as CSV: a `batch` and `record` column followed by one
/// column per input. Vector cells are `;`-separated.
pub fn export_csv(task: &dyn Task) -> String {
    let mut out = String::new();
    for (b, batch) in task.batches().into_iter().enumerate() {
        if b == 0 {
            let names: Vec<&str> = batch.columns.keys().map(String::as_str).collect();
            let _ = writeln!(out, "batch,record,{}", names.join(","));
        }
        for r in 0..batch.len() {
            let cells: Vec<String> = batch.columns.values().map(|c| cell(&c[r])).collect();
            let _ = writeln!(out, "{b},{r},{}", cells.join(","));
        }
    }
    out
}
