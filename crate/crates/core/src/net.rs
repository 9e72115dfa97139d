//! Shared HTTP plumbing for the judge, embedding, and generation gateways.
//!
//! All remote calls speak the OpenAI-compatible JSON surface; deterministic
//! mocks replace them everywhere tests need reproducibility.

use serde::{Deserialize, Serialize};
use std::sync::{Condvar, Mutex};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("http error: {0}")]
    Http(#[from] reqwest::Error),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("response missing field `{0}`")]
    MissingField(&'static str),
}

/// Configuration for an OpenAI-compatible chat-completions endpoint.
///
/// Deterministic evaluation defaults: `temperature = 0`, `top_p = 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChatEndpointConfig {
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_retries: u32,
    pub timeout_secs: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
    /// Upper bound on concurrent in-flight requests through one client.
    pub max_in_flight: usize,
}

impl Default for ChatEndpointConfig {
    fn default() -> Self {
        ChatEndpointConfig {
            base_url: "http://127.0.0.1:8000/v1".to_string(),
            model_name: "mock-judge".to_string(),
            temperature: 0.0,
            top_p: 1.0,
            max_retries: 2,
            timeout_secs: 60,
            api_key: None,
            max_in_flight: 4,
        }
    }
}

pub(crate) fn build_client(timeout_secs: u64) -> Result<reqwest::blocking::Client, TransportError> {
    Ok(reqwest::blocking::Client::builder()
        .timeout(std::time::Duration::from_secs(timeout_secs))
        .build()?)
}

/// Single-shot JSON POST. Retry policy lives in the callers, which resend the
/// full request body.
pub(crate) fn post_json(
    client: &reqwest::blocking::Client,
    url: &str,
    api_key: Option<&str>,
    body: &serde_json::Value,
) -> Result<serde_json::Value, TransportError> {
    let mut req = client.post(url).json(body);
    if let Some(key) = api_key {
        req = req.bearer_auth(key);
    }
    let resp = req.send()?;
    let status = resp.status();
    if !status.is_success() {
        return Err(TransportError::Status {
            status: status.as_u16(),
            body: resp.text().unwrap_or_default(),
        });
    }
    Ok(resp.json()?)
}

/// Blocking client for `POST {base_url}/chat/completions` with a single user
/// message. Requests are independent, so correlation is inherent: each call
/// returns its own response.
pub struct ChatCompletionsClient {
    cfg: ChatEndpointConfig,
    client: reqwest::blocking::Client,
    limiter: InFlightLimiter,
}

impl ChatCompletionsClient {
    pub fn new(cfg: ChatEndpointConfig) -> Result<Self, TransportError> {
        let client = build_client(cfg.timeout_secs)?;
        let limiter = InFlightLimiter::new(cfg.max_in_flight);
        Ok(ChatCompletionsClient {
            cfg,
            client,
            limiter,
        })
    }

    pub fn config(&self) -> &ChatEndpointConfig {
        &self.cfg
    }

    /// One attempt: send the prompt, return the first choice's content.
    pub fn complete_once(&self, prompt: &str) -> Result<String, TransportError> {
        let _slot = self.limiter.acquire();
        let body = serde_json::json!({
            "model": self.cfg.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
            "top_p": self.cfg.top_p,
        });
        let url = format!(
            "{}/chat/completions",
            self.cfg.base_url.trim_end_matches('/')
        );
        let value = post_json(&self.client, &url, self.cfg.api_key.as_deref(), &body)?;
        value
            .get("choices")
            .and_then(|c| c.get(0))
            .and_then(|c| c.get("message"))
            .and_then(|m| m.get("content"))
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or(TransportError::MissingField("choices[0].message.content"))
    }

    /// Retrying attempt: resends the full prompt up to `max_retries` extra
    /// times on transport failure.
    pub fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        let mut last = None;
        for _ in 0..=self.cfg.max_retries {
            match self.complete_once(prompt) {
                Ok(text) => return Ok(text),
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap())
    }
}

/// Counting semaphore bounding concurrent in-flight requests.
pub(crate) struct InFlightLimiter {
    slots: Mutex<usize>,
    cond: Condvar,
}

pub(crate) struct InFlightSlot<'a>(&'a InFlightLimiter);

impl InFlightLimiter {
    pub fn new(limit: usize) -> Self {
        InFlightLimiter {
            slots: Mutex::new(limit.max(1)),
            cond: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> InFlightSlot<'_> {
        let mut slots = self.slots.lock().unwrap();
        while *slots == 0 {
            slots = self.cond.wait(slots).unwrap();
        }
        *slots -= 1;
        InFlightSlot(self)
    }
}

impl Drop for InFlightSlot<'_> {
    fn drop(&mut self) {
        let mut slots = self.0.slots.lock().unwrap();
        *slots += 1;
        self.0.cond.notify_one();
    }
}
