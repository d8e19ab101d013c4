//! Chat-completion client over blocking HTTP.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{rewrite_prompt, Backend, BackendConfig, BackendError, ClassifyRequest};
use crate::intervene::RewriteRequest;

const BACKOFF_BASE: Duration = Duration::from_millis(250);

/// Spaces calls at least `1 / rate` seconds apart across threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Option<Duration>,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    /// `per_second <= 0` means unlimited.
    pub fn new(per_second: f64) -> Self {
        let interval = (per_second > 0.0).then(|| Duration::from_secs_f64(1.0 / per_second));
        Self {
            interval,
            next: Mutex::new(None),
        }
    }

    /// Blocks until the caller may issue a request.
    pub fn acquire(&self) {
        let Some(interval) = self.interval else {
            return;
        };
        let wait = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + interval);
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

/// Sends each prompt as a single user message to an OpenAI-style
/// `/chat/completions` endpoint.
pub struct RemoteBackend {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    temperature: f64,
    max_tokens: u32,
    api_key: String,
    retries: u32,
    limiter: RateLimiter,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl RemoteBackend {
    pub fn new(cfg: &BackendConfig, api_key: String) -> Result<Self, BackendError> {
        cfg.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout()))
            .http_status_as_error(false)
            .max_idle_connections(8)
            .build()
            .into();
        Ok(Self {
            agent,
            endpoint: cfg.endpoint.clone().unwrap_or_default(),
            model: cfg.model.clone().unwrap_or_default(),
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
            api_key,
            retries: cfg.transport_retries,
            limiter: RateLimiter::new(cfg.rate_limit),
        })
    }

    fn call_once(&self, prompt: &str) -> Result<String, BackendError> {
        self.limiter.acquire();
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let mut request = self.agent.post(&self.endpoint);
        if !self.api_key.is_empty() {
            request = request.header("Authorization", &format!("Bearer {}", self.api_key));
        }
        let mut response = request.send_json(&body).map_err(map_transport)?;
        let status = response.status().as_u16();
        if status == 429 {
            return Err(BackendError::RateLimited);
        }
        if status == 408 || status == 504 {
            return Err(BackendError::Timeout);
        }
        if !(200..300).contains(&status) {
            return Err(BackendError::TransportFailure(format!("HTTP status {status}")));
        }
        let value: Value = response.body_mut().read_json().map_err(map_transport)?;
        extract_content(&value)
    }

    /// One logical call with bounded retries on transient failures.
    pub fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let mut attempt = 0;
        loop {
            match self.call_once(prompt) {
                Err(e) if e.is_transient() && attempt < self.retries => {
                    thread::sleep(BACKOFF_BASE * 2u32.pow(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

fn map_transport(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::Timeout(_) => BackendError::Timeout,
        other => BackendError::TransportFailure(other.to_string()),
    }
}

fn extract_content(value: &Value) -> Result<String, BackendError> {
    let content = value
        .pointer("/choices/0/message/content")
        .ok_or_else(|| BackendError::TransportFailure("response has no choices[0].message.content".into()))?;
    match content {
        Value::String(text) if !text.trim().is_empty() => Ok(text.clone()),
        Value::String(_) | Value::Null => Err(BackendError::EmptyCompletion),
        _ => Err(BackendError::TransportFailure("completion content is not text".into())),
    }
}

impl Backend for RemoteBackend {
    fn rewrite(&self, req: &RewriteRequest, _attempt: u32) -> Result<String, BackendError> {
        self.complete(&rewrite_prompt(req))
    }

    fn classify(&self, req: &ClassifyRequest) -> Result<String, BackendError> {
        self.complete(&req.prompt)
    }
}
