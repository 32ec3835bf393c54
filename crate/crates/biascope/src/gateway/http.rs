//! Blocking HTTP transport for remote backends.
//!
//! One client per endpoint, with a token-bucket rate limiter and bounded
//! retries. Retries use exponential backoff with jitter; every attempt is
//! logged and the full attempt history is carried in the transport error
//! when the endpoint stays unreachable.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Connection settings for one remote backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// Full request URL, e.g. `http://host:8080/v1/chat/completions`.
    pub base_url: String,
    /// Model name sent in request payloads.
    pub model_name: String,
    /// Environment variable holding the bearer token, if the endpoint
    /// requires one. The token itself never appears in config or cache.
    #[serde(default)]
    pub auth_token_env: Option<String>,
    /// Per-request timeout in seconds.
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Retries after the first attempt.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Maximum sustained request rate, requests per second.
    #[serde(default = "default_rate_limit")]
    pub rate_limit: f64,
}

fn default_timeout_secs() -> u64 {
    30
}

fn default_max_retries() -> u32 {
    3
}

fn default_rate_limit() -> f64 {
    4.0
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_url.is_empty() {
            return Err(Error::Config("endpoint base_url is empty".to_string()));
        }
        if self.model_name.is_empty() {
            return Err(Error::Config(format!(
                "endpoint {} has an empty model_name",
                self.base_url
            )));
        }
        if self.timeout_secs == 0 {
            return Err(Error::Config(format!(
                "endpoint {} has a zero timeout",
                self.base_url
            )));
        }
        if !(self.rate_limit.is_finite() && self.rate_limit > 0.0) {
            return Err(Error::Config(format!(
                "endpoint {} has a non-positive rate limit",
                self.base_url
            )));
        }
        Ok(())
    }

    pub fn backend_id(&self) -> String {
        format!("http:{}:{}", self.base_url, self.model_name)
    }
}

/// Classic token bucket: capacity equals the per-second rate, refill is
/// continuous, each request consumes one token.
#[derive(Debug)]
struct TokenBucket {
    capacity: f64,
    tokens: f64,
    refill_per_sec: f64,
    last_refill: Instant,
}

impl TokenBucket {
    fn new(rate: f64) -> TokenBucket {
        TokenBucket {
            capacity: rate.max(1.0),
            tokens: rate.max(1.0),
            refill_per_sec: rate,
            last_refill: Instant::now(),
        }
    }

    fn refill(&mut self) {
        let now = Instant::now();
        let elapsed = now.duration_since(self.last_refill).as_secs_f64();
        self.tokens = (self.tokens + elapsed * self.refill_per_sec).min(self.capacity);
        self.last_refill = now;
    }

    /// Returns how long to wait before a token is available, taking one
    /// token if it already is.
    fn try_take(&mut self) -> Option<Duration> {
        self.refill();
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            None
        } else {
            let deficit = 1.0 - self.tokens;
            Some(Duration::from_secs_f64(deficit / self.refill_per_sec))
        }
    }
}

/// Shared transport across all remote endpoints. Holds one rate limiter per
/// endpoint URL and counts every request that actually reaches the network.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    buckets: Mutex<HashMap<String, TokenBucket>>,
    network_ops: std::sync::atomic::AtomicU64,
}

impl std::fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpTransport")
            .field("network_ops", &self.network_ops())
            .finish()
    }
}

impl Default for HttpTransport {
    fn default() -> HttpTransport {
        HttpTransport::new()
    }
}

impl HttpTransport {
    pub fn new() -> HttpTransport {
        HttpTransport {
            client: reqwest::blocking::Client::new(),
            buckets: Mutex::new(HashMap::new()),
            network_ops: std::sync::atomic::AtomicU64::new(0),
        }
    }

    pub fn network_ops(&self) -> u64 {
        self.network_ops.load(std::sync::atomic::Ordering::SeqCst)
    }

    fn wait_for_slot(&self, endpoint: &EndpointConfig) {
        loop {
            let wait = {
                let mut buckets = self.buckets.lock().expect("limiter lock poisoned");
                buckets
                    .entry(endpoint.base_url.clone())
                    .or_insert_with(|| TokenBucket::new(endpoint.rate_limit))
                    .try_take()
            };
            match wait {
                None => return,
                Some(d) => std::thread::sleep(d),
            }
        }
    }

    fn auth_token(endpoint: &EndpointConfig) -> Result<Option<String>> {
        match &endpoint.auth_token_env {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(token) => Ok(Some(token)),
                Err(_) => Err(Error::Config(format!(
                    "auth environment variable {var} required by {} is not set",
                    endpoint.base_url
                ))),
            },
        }
    }

    /// POST a JSON payload and parse the JSON reply, retrying transient
    /// failures with exponential backoff plus jitter.
    pub fn post_json(&self, endpoint: &EndpointConfig, payload: &Value) -> Result<Value> {
        let token = Self::auth_token(endpoint)?;
        let mut attempts: Vec<String> = Vec::new();
        let total_tries = endpoint.max_retries + 1;
        for attempt in 0..total_tries {
            if attempt > 0 {
                let base_ms = 100u64.saturating_mul(1 << (attempt - 1).min(6));
                let jitter_ms = rand::rng().random_range(0..=base_ms / 2 + 1);
                std::thread::sleep(Duration::from_millis(base_ms + jitter_ms));
            }
            self.wait_for_slot(endpoint);
            self.network_ops
                .fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            match self.post_once(endpoint, payload, token.as_deref()) {
                Ok(value) => return Ok(value),
                Err(detail) => {
                    log::warn!(
                        "request to {} failed (attempt {}/{}): {}",
                        endpoint.base_url,
                        attempt + 1,
                        total_tries,
                        detail
                    );
                    attempts.push(format!("attempt {}: {}", attempt + 1, detail));
                }
            }
        }
        Err(Error::Transport {
            endpoint: endpoint.base_url.clone(),
            message: format!("request failed after {total_tries} attempts"),
            attempts,
        })
    }

    fn post_once(
        &self,
        endpoint: &EndpointConfig,
        payload: &Value,
        token: Option<&str>,
    ) -> std::result::Result<Value, String> {
        let mut request = self
            .client
            .post(&endpoint.base_url)
            .timeout(Duration::from_secs(endpoint.timeout_secs))
            .json(payload);
        if let Some(token) = token {
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(|e| e.to_string())?;
        let status = response.status();
        let body = response.text().map_err(|e| e.to_string())?;
        if !status.is_success() {
            let snippet: String = body.chars().take(200).collect();
            return Err(format!("status {status}: {snippet}"));
        }
        serde_json::from_str(&body).map_err(|e| format!("invalid JSON body: {e}"))
    }
}
