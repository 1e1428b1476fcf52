use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, TransportError};

pub const API_KEY_VAR: &str = "EVOLATTICE_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmSettings {
    /// Base URL of an OpenAI-compatible API; `/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    pub max_tokens: u32,
    pub timeout_secs: u64,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            endpoint: "http://localhost:8000/v1".into(),
            model: "gpt-oss-120b".into(),
            max_tokens: 65536,
            timeout_secs: 120,
        }
    }
}

/// Chat-completions client. The bearer token comes from `EVOLATTICE_API_KEY`.
pub struct LlmBackend {
    agent: ureq::Agent,
    settings: LlmSettings,
    api_key: Option<String>,
}

impl LlmBackend {
    pub fn new(settings: LlmSettings) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(settings.timeout_secs)))
            .build()
            .into();
        LlmBackend {
            agent,
            settings,
            api_key: std::env::var(API_KEY_VAR).ok(),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }
}

impl ChatBackend for LlmBackend {
    fn respond(&mut self, req: &ChatRequest<'_>) -> Result<String, TransportError> {
        let url = format!("{}/chat/completions", self.settings.endpoint.trim_end_matches('/'));
        let body = json!({
            "model": self.settings.model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": req.temperature,
            "max_tokens": self.settings.max_tokens,
        });
        let mut call = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(k) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {k}"));
        }
        let fail = |e: &dyn std::fmt::Display| TransportError::Failed(e.to_string());
        let mut resp = call.send_json(&body).map_err(|e| fail(&e))?;
        let v: Value = resp.body_mut().read_json().map_err(|e| fail(&e))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| TransportError::Failed("response has no choices[0].message.content".into()))
    }
}
