//! Mutation proposal providers.
//!
//! Every provider is a [`ChatBackend`] answering text prompts with text. The
//! [`Oracle`] driver renders prompts, parses replies, retries malformed ones
//! and records every exchange as a transcript, so the LLM, the offline
//! generators and transcript replay all travel the same path.

mod fuzz;
pub mod grammar;
mod llm;
mod prompt;
mod replay;
mod sampler;
mod scripted;
pub mod transcript;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::ImportanceTable;
use crate::engine::Path;
use crate::evolution::MutationPlan;
use crate::expr::{parse, Kind};
use crate::lattice::Lattice;

pub use fuzz::FuzzBackend;
pub use llm::{LlmBackend, LlmSettings};
pub use prompt::{baseline_prompt, hypothesis_prompt, mutation_prompt, BASELINE_SYSTEM_PROMPT, SYSTEM_PROMPT};
pub use replay::TranscriptBackend;
pub use sampler::GrammarSampler;
pub use scripted::ScriptedBackend;
use transcript::Exchange;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Hypotheses,
    Mutation,
    /// Whole-program replacement (single-candidate baseline).
    Regenerate,
    /// Edit of the current program (single-candidate baseline).
    Edit,
}

/// What a provider can see when asked for a proposal.
pub struct OracleContext<'a> {
    pub step: usize,
    /// Current lattice with statistics attached.
    pub lattice: &'a Lattice,
    pub importance: Option<&'a ImportanceTable>,
    pub best_path: Option<&'a Path>,
    pub best_so_far: Option<f64>,
    pub prev_diff: &'a str,
    pub task_inputs: &'a [(String, Kind)],
    pub output_kind: Kind,
    pub task_summary: &'a str,
}

pub struct ChatRequest<'a> {
    pub purpose: Purpose,
    pub step: usize,
    pub attempt: usize,
    pub system: &'a str,
    pub user: &'a str,
    pub temperature: f64,
    pub context: &'a OracleContext<'a>,
    /// The current program, for baseline requests.
    pub current: Option<&'a str>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("{0}")]
    Failed(String),
    #[error("missing transcript: {0}")]
    MissingTranscript(String),
}

pub trait ChatBackend {
    fn respond(&mut self, request: &ChatRequest<'_>) -> Result<String, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("no usable reply after {attempts} attempt(s): {reason}")]
    Malformed { attempts: usize, reason: String },
    #[error("transport: {0}")]
    Transport(#[from] TransportError),
    #[error("cannot write transcript: {0}")]
    Transcript(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    pub hypothesis_temperature: f64,
    pub mutation_temperature: f64,
    /// Re-asks after a malformed reply.
    pub retry_budget: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            hypothesis_temperature: 0.5,
            mutation_temperature: 0.0,
            retry_budget: 2,
        }
    }
}

pub struct Oracle {
    backend: Box<dyn ChatBackend>,
    pub settings: OracleSettings,
    transcripts: Option<PathBuf>,
}

/// Fenced code blocks as (info string, content).
pub fn fenced_blocks(text: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut open: Option<(String, Vec<&str>)> = None;
    for line in text.lines() {
        let t = line.trim_start();
        match open.take() {
            None => {
                if let Some(info) = t.strip_prefix("```") {
                    open = Some((info.trim().to_string(), Vec::new()));
                }
            }
            Some((info, mut lines)) => {
                if t.starts_with("```") {
                    out.push((info, lines.join("\n")));
                } else {
                    lines.push(line);
                    open = Some((info, lines));
                }
            }
        }
    }
    out
}

/// The first fenced block that holds a JSON array of edits.
pub fn parse_plan(text: &str) -> Result<MutationPlan, String> {
    let blocks = fenced_blocks(text);
    if blocks.is_empty() {
        return Err("no fenced plan block".into());
    }
    let mut last = String::new();
    for (_, content) in blocks {
        match serde_json::from_str::<MutationPlan>(&content) {
            Ok(p) => return Ok(p),
            Err(e) => last = e.to_string(),
        }
    }
    Err(format!("no fenced block holds a valid plan ({last})"))
}

/// Enumerated (`1.`, `2)`) or bulleted lines.
pub fn parse_hypotheses(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|l| {
            let t = l.trim();
            let digits = t.chars().take_while(char::is_ascii_digit).count();
            let rest = if digits > 0 {
                t[digits..].strip_prefix('.').or_else(|| t[digits..].strip_prefix(')'))?
            } else {
                t.strip_prefix("- ").or_else(|| t.strip_prefix("* "))?
            };
            let rest = rest.trim();
            (!rest.is_empty()).then(|| rest.to_string())
        })
        .collect()
}

/// A single lambda, from the first fenced block or else the whole reply.
pub fn parse_source(text: &str) -> Result<String, String> {
    let blocks = fenced_blocks(text);
    let body = blocks.first().map_or(text, |(_, c)| c.as_str());
    let start = body.find("lambda").ok_or("no lambda in reply")?;
    let src = body[start..].trim_end().to_string();
    parse(&src).map_err(|e| e.to_string())?;
    Ok(src)
}

impl Oracle {
    pub fn new(backend: Box<dyn ChatBackend>, settings: OracleSettings) -> Self {
        Oracle {
            backend,
            settings,
            transcripts: None,
        }
    }

    /// Records every exchange under `dir`.
    pub fn with_transcripts(mut self, dir: impl Into<PathBuf>) -> Self {
        self.transcripts = Some(dir.into());
        self
    }

    fn save(&self, step: usize, purpose: Purpose, log: &[Exchange]) -> Result<(), OracleError> {
        match &self.transcripts {
            Some(dir) => transcript::write(dir, step, purpose, log).map_err(|e| OracleError::Transcript(e.to_string())),
            None => Ok(()),
        }
    }

    /// One call at the hypothesis temperature. Transport failures yield no hypotheses.
    pub fn hypotheses(&mut self, ctx: &OracleContext<'_>) -> Result<Vec<String>, OracleError> {
        let user = hypothesis_prompt(ctx);
        let req = ChatRequest {
            purpose: Purpose::Hypotheses,
            step: ctx.step,
            attempt: 0,
            system: SYSTEM_PROMPT,
            user: &user,
            temperature: self.settings.hypothesis_temperature,
            context: ctx,
            current: None,
        };
        let reply = self.backend.respond(&req);
        let log = [Exchange {
            system: SYSTEM_PROMPT.to_string(),
            user: user.clone(),
            reply: reply.clone().map_err(|e| e.to_string()),
        }];
        self.save(ctx.step, Purpose::Hypotheses, &log)?;
        match reply {
            Ok(text) => Ok(parse_hypotheses(&text)),
            Err(e @ TransportError::MissingTranscript(_)) => Err(e.into()),
            Err(e) => {
                log::warn!("step {}: hypothesis call failed: {e}", ctx.step);
                Ok(Vec::new())
            }
        }
    }

    fn ask<T>(
        &mut self,
        ctx: &OracleContext<'_>,
        purpose: Purpose,
        system: &str,
        user: String,
        current: Option<&str>,
        parse_reply: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, OracleError> {
        let mut log = Vec::new();
        let mut prompt = user.clone();
        let attempts = 1 + self.settings.retry_budget;
        let mut last = String::new();
        for attempt in 0..attempts {
            let req = ChatRequest {
                purpose,
                step: ctx.step,
                attempt,
                system,
                user: &prompt,
                temperature: self.settings.mutation_temperature,
                context: ctx,
                current,
            };
            let reply = self.backend.respond(&req);
            log.push(Exchange {
                system: system.to_string(),
                user: prompt.clone(),
                reply: reply.clone().map_err(|e| e.to_string()),
            });
            let text = match reply {
                Ok(t) => t,
                Err(e) => {
                    self.save(ctx.step, purpose, &log)?;
                    return Err(e.into());
                }
            };
            match parse_reply(&text) {
                Ok(v) => {
                    self.save(ctx.step, purpose, &log)?;
                    return Ok(v);
                }
                Err(e) => {
                    last = e;
                    prompt = format!("{user}{}{last}", prompt::CORRECTION);
                }
            }
        }
        self.save(ctx.step, purpose, &log)?;
        Err(OracleError::Malformed { attempts, reason: last })
    }

    /// A mutation plan, re-asking up to the retry budget on malformed replies.
    pub fn propose(&mut self, ctx: &OracleContext<'_>, hypotheses: &[String]) -> Result<MutationPlan, OracleError> {
        let user = mutation_prompt(ctx, hypotheses);
        self.ask(ctx, Purpose::Mutation, SYSTEM_PROMPT, user, None, parse_plan)
    }

    /// A whole replacement program (`Regenerate`) or an edit of `current` (`Edit`).
    pub fn propose_source(
        &mut self,
        ctx: &OracleContext<'_>,
        purpose: Purpose,
        current: &str,
    ) -> Result<String, OracleError> {
        let user = baseline_prompt(ctx, purpose, current);
        self.ask(ctx, purpose, BASELINE_SYSTEM_PROMPT, user, Some(current), parse_source)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_from_fenced_block_with_prose() {
        let text = "Sure.\n```json\n[{\"op\":\"add_alternative\",\"node\":\"output\",\"source\":\"lambda zerolm_core: zerolm_core\"}]\n```\nDone.";
        assert_eq!(parse_plan(text).unwrap().edits.len(), 1);
        assert!(parse_plan("just prose").is_err());
    }

    #[test]
    fn hypothesis_lines() {
        let h = parse_hypotheses("Ideas:\n1. prune output_1\n2) combine a and b\n- bullet\nnot this");
        assert_eq!(h, ["prune output_1", "combine a and b", "bullet"]);
    }

    #[test]
    fn source_from_reply() {
        assert_eq!(parse_source("```python\nlambda x: x + 1\n```").unwrap(), "lambda x: x + 1");
        assert_eq!(parse_source("try lambda x: 2 * x").unwrap(), "lambda x: 2 * x");
        assert!(parse_source("lambda x: (").is_err());
    }
}
