//! Chat-completions gateway with retries, a token budget and a cap on
//! concurrent requests.

mod http;
mod mock;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompting::Message;

pub use http::HttpBackend;
pub use mock::ScriptedBackend;

pub const API_KEY_VAR: &str = "WEAVER_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    pub max_retries: u32,
    /// First backoff delay; doubles on each retry.
    pub retry_base_ms: u64,
    /// Total tokens (in + out) the run may spend.
    pub token_budget: u64,
    pub price_in_per_1k: f64,
    pub price_out_per_1k: f64,
    pub max_inflight: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model: "deepseek-v3-0324".into(),
            temperature: 0.0,
            max_tokens: 2048,
            timeout_secs: 120.0,
            max_retries: 3,
            retry_base_ms: 500,
            token_budget: 5_000_000,
            price_in_per_1k: 0.0,
            price_out_per_1k: 0.0,
            max_inflight: 4,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.timeout_secs > 0.0) {
            return Err(LlmError::Config("timeout_secs must be positive".into()));
        }
        if self.max_inflight == 0 {
            return Err(LlmError::Config("max_inflight must be at least 1".into()));
        }
        if self.price_in_per_1k < 0.0 || self.price_out_per_1k < 0.0 {
            return Err(LlmError::Config("prices must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("token budget exhausted")]
    BudgetExhausted,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("invalid llm configuration: {0}")]
    Config(String),
}

impl LlmError {
    fn retryable(&self) -> bool {
        match self {
            LlmError::Transport(_) => true,
            LlmError::Endpoint { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

pub trait Backend: Send + Sync {
    fn send(&self, config: &LlmConfig, messages: &[Message]) -> Result<Completion, LlmError>;
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("semaphore poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("semaphore poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore poisoned") += 1;
        self.0.cv.notify_one();
    }
}

pub struct LlmClient {
    config: LlmConfig,
    backend: Box<dyn Backend>,
    spent: AtomicU64,
    tokens_in: AtomicU64,
    tokens_out: AtomicU64,
    calls: AtomicU64,
    slots: Semaphore,
}

impl LlmClient {
    pub fn new(config: LlmConfig, backend: Box<dyn Backend>) -> Result<Self, LlmError> {
        config.validate()?;
        let slots = Semaphore { free: Mutex::new(config.max_inflight), cv: Condvar::new() };
        Ok(Self {
            config,
            backend,
            spent: AtomicU64::new(0),
            tokens_in: AtomicU64::new(0),
            tokens_out: AtomicU64::new(0),
            calls: AtomicU64::new(0),
            slots,
        })
    }

    /// Client over the HTTP endpoint, reading the key from the environment.
    pub fn http(config: LlmConfig) -> Result<Self, LlmError> {
        let key = std::env::var(API_KEY_VAR).ok();
        let backend = HttpBackend::new(&config, key);
        Self::new(config, Box::new(backend))
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    pub fn budget_exhausted(&self) -> bool {
        self.spent.load(Ordering::SeqCst) >= self.config.token_budget
    }

    pub fn complete(&self, messages: &[Message]) -> Result<Completion, LlmError> {
        if self.budget_exhausted() {
            return Err(LlmError::BudgetExhausted);
        }
        let _permit = self.slots.acquire();
        let mut attempt = 0;
        let result = loop {
            match self.backend.send(&self.config, messages) {
                Err(e) if e.retryable() && attempt < self.config.max_retries => {
                    let delay = self.config.retry_base_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!("llm request failed ({e}); retrying in {delay} ms");
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                other => break other,
            }
        }?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.tokens_in.fetch_add(result.tokens_in, Ordering::SeqCst);
        self.tokens_out.fetch_add(result.tokens_out, Ordering::SeqCst);
        self.spent.fetch_add(result.tokens_in + result.tokens_out, Ordering::SeqCst);
        Ok(result)
    }

    /// (calls, tokens in, tokens out) so far.
    pub fn usage(&self) -> (u64, u64, u64) {
        (
            self.calls.load(Ordering::SeqCst),
            self.tokens_in.load(Ordering::SeqCst),
            self.tokens_out.load(Ordering::SeqCst),
        )
    }

    /// Counts tokens already spent, e.g. when resuming a run.
    pub fn preload_usage(&self, tokens_in: u64, tokens_out: u64) {
        self.tokens_in.fetch_add(tokens_in, Ordering::SeqCst);
        self.tokens_out.fetch_add(tokens_out, Ordering::SeqCst);
        self.spent.fetch_add(tokens_in + tokens_out, Ordering::SeqCst);
    }
}

/// Price of a call under linear per-1K-token pricing.
pub fn cost(tokens_in: u64, tokens_out: u64, config: &LlmConfig) -> f64 {
    tokens_in as f64 / 1000.0 * config.price_in_per_1k + tokens_out as f64 / 1000.0 * config.price_out_per_1k
}
