use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{Backend, Completion, LlmConfig, LlmError};
use crate::prompting::Message;

/// Replays a fixed list of responses by call sequence number. Token counts
/// are estimated at four characters per token.
pub struct ScriptedBackend {
    responses: Vec<String>,
    next: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(responses: Vec<String>) -> Self {
        Self { responses, next: AtomicUsize::new(0) }
    }

    /// Reads a transcript file: a JSON array of response strings.
    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        let responses: Vec<String> =
            serde_json::from_str(&text).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::new(responses))
    }

    /// Skips responses already consumed, e.g. when resuming.
    pub fn skip(&self, n: usize) {
        self.next.fetch_add(n, Ordering::SeqCst);
    }
}

pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

impl Backend for ScriptedBackend {
    fn send(&self, _config: &LlmConfig, messages: &[Message]) -> Result<Completion, LlmError> {
        let i = self.next.fetch_add(1, Ordering::SeqCst);
        let text = self.responses.get(i).ok_or_else(|| LlmError::Endpoint {
            status: 410,
            body: format!("transcript exhausted after {} responses", self.responses.len()),
        })?;
        let tokens_in = messages.iter().map(|m| estimate_tokens(&m.content)).sum();
        Ok(Completion { text: text.clone(), tokens_in, tokens_out: estimate_tokens(text) })
    }
}
