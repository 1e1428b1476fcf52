//! Transcript files.
//!
//! One file per step and call kind. Each call attempt is a run of sections
//! introduced by header lines `@@@ <attempt> <section>`, where section is
//! `system`, `user`, `response` or `error`. Content lines that begin with `@`
//! or `\` are written with a leading `\`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::Purpose;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exchange {
    pub system: String,
    pub user: String,
    pub reply: Result<String, String>,
}

pub fn transcript_path(dir: &Path, step: usize, purpose: Purpose) -> PathBuf {
    let kind = match purpose {
        Purpose::Hypotheses => "hypo",
        _ => "mut",
    };
    dir.join(format!("step_{step:06}_{kind}.txt"))
}

fn push_section(out: &mut String, attempt: usize, name: &str, body: &str) {
    out.push_str(&format!("@@@ {attempt} {name}\n"));
    for line in body.split('\n') {
        if line.starts_with('@') || line.starts_with('\\') {
            out.push('\\');
        }
        out.push_str(line);
        out.push('\n');
    }
}

pub fn render(exchanges: &[Exchange]) -> String {
    let mut out = String::new();
    for (i, e) in exchanges.iter().enumerate() {
        push_section(&mut out, i, "system", &e.system);
        push_section(&mut out, i, "user", &e.user);
        match &e.reply {
            Ok(r) => push_section(&mut out, i, "response", r),
            Err(r) => push_section(&mut out, i, "error", r),
        }
    }
    out
}

pub fn parse(text: &str) -> Result<Vec<Exchange>, String> {
    let mut out: Vec<Exchange> = Vec::new();
    let mut current: Option<(usize, String, Vec<&str>)> = None;
    let flush = |cur: Option<(usize, String, Vec<&str>)>, out: &mut Vec<Exchange>| -> Result<(), String> {
        let Some((attempt, name, lines)) = cur else { return Ok(()) };
        let body = lines.join("\n");
        while out.len() <= attempt {
            out.push(Exchange {
                system: String::new(),
                user: String::new(),
                reply: Ok(String::new()),
            });
        }
        let e = &mut out[attempt];
        match name.as_str() {
            "system" => e.system = body,
            "user" => e.user = body,
            "response" => e.reply = Ok(body),
            "error" => e.reply = Err(body),
            other => return Err(format!("unknown section `{other}`")),
        }
        Ok(())
    };
    let text = text.strip_suffix('\n').unwrap_or(text);
    for line in text.split('\n') {
        if let Some(h) = line.strip_prefix("@@@ ") {
            flush(current.take(), &mut out)?;
            let (a, name) = h.split_once(' ').ok_or_else(|| format!("bad header `{line}`"))?;
            let attempt = a.parse().map_err(|_| format!("bad header `{line}`"))?;
            current = Some((attempt, name.to_string(), Vec::new()));
        } else if let Some((_, _, lines)) = current.as_mut() {
            lines.push(line.strip_prefix('\\').unwrap_or(line));
        } else if !line.is_empty() {
            return Err("text before first section".into());
        }
    }
    flush(current, &mut out)?;
    Ok(out)
}

pub fn write(dir: &Path, step: usize, purpose: Purpose, exchanges: &[Exchange]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(transcript_path(dir, step, purpose), render(exchanges))
}

pub fn read(dir: &Path, step: usize, purpose: Purpose) -> io::Result<Vec<Exchange>> {
    let text = fs::read_to_string(transcript_path(dir, step, purpose))?;
    parse(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
