use std::time::Duration;

use serde_json::{json, Value};
use ureq::Agent;

use super::{Backend, Completion, LlmConfig, LlmError};
use crate::prompting::Message;

/// Chat-completions endpoint over HTTP(S).
pub struct HttpBackend {
    agent: Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(config: &LlmConfig, api_key: Option<String>) -> Self {
        let agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let url = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
        Self { agent, url, api_key }
    }
}

impl Backend for HttpBackend {
    fn send(&self, config: &LlmConfig, messages: &[Message]) -> Result<Completion, LlmError> {
        let body = json!({
            "model": config.model,
            "messages": messages,
            "temperature": config.temperature,
            "max_tokens": config.max_tokens,
        });
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| LlmError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(LlmError::Endpoint { status, body: text });
        }
        parse_completion(&text).ok_or(LlmError::Endpoint { status, body: text })
    }
}

fn parse_completion(body: &str) -> Option<Completion> {
    let v: Value = serde_json::from_str(body).ok()?;
    let text = v.pointer("/choices/0/message/content")?.as_str()?.to_string();
    let usage = |k: &str| v.pointer(&format!("/usage/{k}")).and_then(Value::as_u64).unwrap_or(0);
    Some(Completion { text, tokens_in: usage("prompt_tokens"), tokens_out: usage("completion_tokens") })
}
