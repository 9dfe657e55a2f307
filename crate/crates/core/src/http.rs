//! JSON-over-HTTP POST with retry, shared by the completion backend and the
//! NLI scorer client.

use std::thread;
use std::time::Duration;

use log::{debug, warn};
use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Exponential backoff: attempt `k` (1-based) that fails waits
/// `base_delay_ms * 2^(k-1)`, capped at `max_delay_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    pub timeout_secs: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
            timeout_secs: 120,
        }
    }
}

impl RetryPolicy {
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let factor = 1u64
            .checked_shl(attempt.saturating_sub(1))
            .unwrap_or(u64::MAX);
        Duration::from_millis(
            self.base_delay_ms
                .saturating_mul(factor)
                .min(self.max_delay_ms),
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HttpError {
    #[error("transport failure: {0}")]
    Transport(String),
    /// Non-success status; `body` is the provider payload, verbatim.
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("undecodable response: {0}")]
    Decode(String),
}

impl HttpError {
    pub fn is_retryable(&self) -> bool {
        match self {
            HttpError::Transport(_) => true,
            HttpError::Status { status, .. } => *status == 429 || *status >= 500,
            HttpError::Decode(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpFailure {
    pub error: HttpError,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JsonResponse {
    pub body: Value,
    pub attempts: u32,
}

pub fn build_client(policy: &RetryPolicy) -> Result<Client, HttpError> {
    Client::builder()
        .timeout(Duration::from_secs(policy.timeout_secs.max(1)))
        .build()
        .map_err(|e| HttpError::Transport(e.to_string()))
}

/// POSTs `payload`, retrying transport errors, 429 and 5xx.
pub fn post_json(
    client: &Client,
    url: &str,
    bearer: Option<&str>,
    payload: &Value,
    policy: &RetryPolicy,
) -> Result<JsonResponse, HttpFailure> {
    let max = policy.max_attempts.max(1);
    let mut attempt = 0;
    loop {
        attempt += 1;
        match post_once(client, url, bearer, payload) {
            Ok(body) => {
                return Ok(JsonResponse {
                    body,
                    attempts: attempt,
                })
            }
            Err(error) if error.is_retryable() && attempt < max => {
                let wait = policy.delay_after(attempt);
                warn!("attempt {attempt}/{max} to {url} failed ({error}); retrying in {wait:?}");
                thread::sleep(wait);
            }
            Err(error) => {
                return Err(HttpFailure {
                    error,
                    attempts: attempt,
                })
            }
        }
    }
}

fn post_once(
    client: &Client,
    url: &str,
    bearer: Option<&str>,
    payload: &Value,
) -> Result<Value, HttpError> {
    let mut req = client.post(url).json(payload);
    if let Some(token) = bearer {
        req = req.bearer_auth(token);
    }
    let resp = req
        .send()
        .map_err(|e| HttpError::Transport(e.to_string()))?;
    let status = resp.status();
    let text = resp
        .text()
        .map_err(|e| HttpError::Transport(e.to_string()))?;
    debug!("POST {url} -> {status}");
    if !status.is_success() {
        return Err(HttpError::Status {
            status: status.as_u16(),
            body: text,
        });
    }
    serde_json::from_str(&text).map_err(|e| HttpError::Decode(format!("{e}: {text}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            base_delay_ms: 100,
            max_delay_ms: 350,
            ..RetryPolicy::default()
        };
        let waits: Vec<u128> = (1..=4).map(|a| p.delay_after(a).as_millis()).collect();
        assert_eq!(waits, [100, 200, 350, 350]);
    }

    #[test]
    fn retryable_classes() {
        assert!(HttpError::Transport("reset".into()).is_retryable());
        assert!(HttpError::Status {
            status: 429,
            body: String::new()
        }
        .is_retryable());
        assert!(HttpError::Status {
            status: 503,
            body: String::new()
        }
        .is_retryable());
        assert!(!HttpError::Status {
            status: 400,
            body: String::new()
        }
        .is_retryable());
    }
}
