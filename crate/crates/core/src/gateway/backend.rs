//! Completion backends: an OpenAI-compatible HTTP client and a scripted mock.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CompletionRequest, GatewayError, Usage};
use crate::http::{self, HttpError, RetryPolicy};
use crate::text::word_count;

/// Raw backend answer, before caching.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendResponse {
    pub text: String,
    pub usage: Option<Usage>,
    pub attempts: u32,
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<BackendResponse, GatewayError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    /// Substring the prompt must contain.
    pub contains: String,
    pub response: String,
}

/// Deterministic backend for tests and offline runs.
///
/// Lookup order: exact prompt, then the first rule whose `contains` occurs in
/// the prompt, then `default_response`. With none matching the call fails as
/// a provider error.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockBackend {
    pub responses: HashMap<String, String>,
    pub rules: Vec<MockRule>,
    pub default_response: Option<String>,
    /// Prompts longer than this many words are rejected as too long.
    pub context_limit: Option<usize>,
    #[serde(skip)]
    calls: AtomicUsize,
}

impl Clone for MockBackend {
    fn clone(&self) -> Self {
        Self {
            responses: self.responses.clone(),
            rules: self.rules.clone(),
            default_response: self.default_response.clone(),
            context_limit: self.context_limit,
            calls: AtomicUsize::new(0),
        }
    }
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_response(mut self, prompt: &str, response: &str) -> Self {
        self.responses.insert(prompt.into(), response.into());
        self
    }

    pub fn with_rule(mut self, contains: &str, response: &str) -> Self {
        self.rules.push(MockRule {
            contains: contains.into(),
            response: response.into(),
        });
        self
    }

    pub fn with_default(mut self, response: &str) -> Self {
        self.default_response = Some(response.into());
        self
    }

    pub fn with_context_limit(mut self, words: usize) -> Self {
        self.context_limit = Some(words);
        self
    }

    /// Number of completions attempted against this backend.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<BackendResponse, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let words = word_count(&request.prompt);
        if let Some(limit) = self.context_limit {
            if words > limit {
                return Err(GatewayError::ContextLength {
                    model_id: request.model_id.clone(),
                    message: format!("prompt has {words} words, limit is {limit}"),
                });
            }
        }
        let text = self
            .responses
            .get(&request.prompt)
            .or_else(|| {
                self.rules
                    .iter()
                    .find(|r| request.prompt.contains(&r.contains))
                    .map(|r| &r.response)
            })
            .or(self.default_response.as_ref())
            .cloned()
            .ok_or_else(|| GatewayError::Provider {
                status: 404,
                body: "mock backend has no response for this prompt".into(),
            })?;
        let completion_tokens = word_count(&text) as u64;
        Ok(BackendResponse {
            usage: Some(Usage {
                prompt_tokens: Some(words as u64),
                completion_tokens: Some(completion_tokens),
                total_tokens: Some(words as u64 + completion_tokens),
            }),
            text,
            attempts: 1,
        })
    }
}

pub const DEFAULT_CHAT_PATH: &str = "/v1/chat/completions";

/// Client for any server speaking the OpenAI chat-completions protocol.
pub struct OpenAiBackend {
    url: String,
    api_key: Option<String>,
    client: Client,
    retry: RetryPolicy,
}

impl OpenAiBackend {
    pub fn new(
        base_url: &str,
        path: &str,
        api_key: Option<String>,
        retry: RetryPolicy,
    ) -> Result<Self, GatewayError> {
        let client = http::build_client(&retry).map_err(|e| GatewayError::Transport {
            message: e.to_string(),
            attempts: 0,
        })?;
        Ok(Self {
            url: format!(
                "{}/{}",
                base_url.trim_end_matches('/'),
                path.trim_start_matches('/')
            ),
            api_key,
            client,
            retry,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

fn is_context_length(status: u16, body: &str) -> bool {
    let lower = body.to_lowercase();
    (status == 400 || status == 413)
        && (lower.contains("context_length_exceeded")
            || lower.contains("maximum context length")
            || lower.contains("context length"))
}

impl Backend for OpenAiBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<BackendResponse, GatewayError> {
        let payload = json!({
            "model": request.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let resp = http::post_json(
            &self.client,
            &self.url,
            self.api_key.as_deref(),
            &payload,
            &self.retry,
        )
        .map_err(|f| match f.error {
            HttpError::Status { status, body } if is_context_length(status, &body) => {
                GatewayError::ContextLength {
                    model_id: request.model_id.clone(),
                    message: body,
                }
            }
            HttpError::Status { status, body } if !(status == 429 || status >= 500) => {
                GatewayError::Provider { status, body }
            }
            HttpError::Decode(message) => GatewayError::Decode(message),
            other => GatewayError::Transport {
                message: other.to_string(),
                attempts: f.attempts,
            },
        })?;
        let text = resp
            .body
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| {
                GatewayError::Decode(format!("no choices[0].message.content in {}", resp.body))
            })?
            .to_string();
        let usage = resp
            .body
            .get("usage")
            .and_then(|u| serde_json::from_value::<Usage>(u.clone()).ok());
        Ok(BackendResponse {
            text,
            usage,
            attempts: resp.attempts,
        })
    }
}
