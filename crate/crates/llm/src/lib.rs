//! Bridge from prompt bundles to an external text-generation endpoint.
//!
//! Hosted models accept text, not token embeddings, so only the text
//! rendering of a bundle is sent: preamble, `<img:k>` and `<seg:r:m|s>`
//! placeholders, attribute text and instruction. The visual and segmentation
//! tokens themselves never leave the process.
//!
//! The API key is read from [`API_KEY_ENV`] and never logged.

mod config;
mod shapes;

use std::time::Duration;

use ctreport_core::prompt::PromptBundle;
use futures::stream::{self, StreamExt};

pub use config::{ApiKey, EndpointConfig, API_KEY_ENV};
pub use shapes::ApiShape;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("generation is disabled")]
    Disabled,
    #[error("invalid endpoint configuration: {0}")]
    InvalidConfig(String),
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("endpoint returned HTTP {status} after {attempts} attempt(s)")]
    HttpError { status: u16, attempts: u32 },
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("endpoint response did not match the {shape:?} shape: {message}")]
    MalformedResponse { shape: ApiShape, message: String },
    #[error("endpoint returned an empty completion")]
    EmptyCompletion,
}

enum Attempt {
    Done(String),
    Retry(LlmError),
    Fail(LlmError),
}

/// Reusable client; cheap to share by reference across concurrent requests.
#[derive(Clone, Debug)]
pub struct LlmClient {
    cfg: EndpointConfig,
    http: reqwest::Client,
}

impl LlmClient {
    pub fn new(cfg: EndpointConfig) -> Result<Self, LlmError> {
        cfg.validate()?;
        let http = reqwest::Client::builder()
            .timeout(cfg.timeout())
            .build()
            .map_err(|e| LlmError::InvalidConfig(e.to_string()))?;
        Ok(LlmClient { cfg, http })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    /// Sends the bundle's text rendering and returns the completion.
    pub async fn generate_region_report(&self, bundle: &PromptBundle) -> Result<String, LlmError> {
        self.generate_text(&bundle.to_text()).await
    }

    /// Retries transient failures (timeouts, transport errors, 429, 5xx)
    /// up to `retries` times with exponential backoff.
    pub async fn generate_text(&self, prompt: &str) -> Result<String, LlmError> {
        if !self.cfg.enabled {
            return Err(LlmError::Disabled);
        }
        let attempts = self.cfg.retries + 1;
        let mut delay = self.cfg.backoff_base();
        let mut last = LlmError::Transport {
            message: "no attempt made".into(),
            attempts: 0,
        };
        for attempt in 1..=attempts {
            match self.attempt(prompt, attempt).await {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => {
                    tracing::warn!(attempt, error = %e, "generation attempt failed");
                    last = e;
                }
            }
            if attempt < attempts {
                tokio::time::sleep(delay).await;
                delay = delay.mul_f64(self.cfg.backoff_factor);
            }
        }
        Err(last)
    }

    async fn attempt(&self, prompt: &str, attempt: u32) -> Attempt {
        let body = self
            .cfg
            .shape
            .request(prompt, self.cfg.max_new_tokens, self.cfg.model.as_deref());
        tracing::debug!(
            url = %self.cfg.base_url,
            shape = ?self.cfg.shape,
            attempt,
            prompt_chars = prompt.len(),
            authorized = self.cfg.api_key.is_some(),
            "sending generation request"
        );
        let mut req = self.http.post(&self.cfg.base_url).json(&body);
        if let Some(key) = &self.cfg.api_key {
            req = req.bearer_auth(key.expose());
        }
        let resp = match req.send().await {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Retry(LlmError::Timeout { attempts: attempt }),
            Err(e) => {
                return Attempt::Retry(LlmError::Transport {
                    message: self.cfg.redact(&e.to_string()),
                    attempts: attempt,
                })
            }
        };
        let status = resp.status();
        if !status.is_success() {
            let err = LlmError::HttpError {
                status: status.as_u16(),
                attempts: attempt,
            };
            let transient = status.is_server_error() || status.as_u16() == 429 || status.as_u16() == 408;
            return if transient {
                Attempt::Retry(err)
            } else {
                Attempt::Fail(err)
            };
        }
        let value: serde_json::Value = match resp.json().await {
            Ok(v) => v,
            Err(e) if e.is_timeout() => return Attempt::Retry(LlmError::Timeout { attempts: attempt }),
            Err(e) => {
                return Attempt::Fail(LlmError::MalformedResponse {
                    shape: self.cfg.shape,
                    message: self.cfg.redact(&e.to_string()),
                })
            }
        };
        tracing::debug!(attempt, status = status.as_u16(), "generation response received");
        match self.cfg.shape.completion(&value) {
            Ok(text) if text.trim().is_empty() => Attempt::Fail(LlmError::EmptyCompletion),
            Ok(text) => Attempt::Done(text),
            Err(message) => Attempt::Fail(LlmError::MalformedResponse {
                shape: self.cfg.shape,
                message,
            }),
        }
    }

    /// Generates every bundle with at most `max_concurrency` requests in
    /// flight. Results keep the input order.
    pub async fn generate_all(&self, bundles: &[PromptBundle]) -> Vec<Result<String, LlmError>> {
        stream::iter(bundles.iter().map(|b| self.generate_region_report(b)))
            .buffered(self.cfg.max_concurrency.max(1))
            .collect()
            .await
    }
}

/// Seconds as a `Duration`, rejecting non-positive and non-finite values.
pub(crate) fn positive_secs(secs: f64, what: &str) -> Result<Duration, LlmError> {
    if secs.is_finite() && secs > 0.0 {
        Ok(Duration::from_secs_f64(secs))
    } else {
        Err(LlmError::InvalidConfig(format!(
            "{what} must be a positive number of seconds, got {secs}"
        )))
    }
}
