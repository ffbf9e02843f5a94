use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::{positive_secs, ApiShape, LlmError};

/// Environment variable holding the endpoint's bearer token.
pub const API_KEY_ENV: &str = "CTREPORT_LLM_API_KEY";

/// A bearer token. `Debug` and `Display` never show the value.
#[derive(Clone, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        ApiKey(key.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey([redacted])")
    }
}

impl fmt::Display for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[redacted]")
    }
}

/// Endpoint settings. The key is never (de)serialized; it comes from
/// [`API_KEY_ENV`] through [`EndpointConfig::with_env_key`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub enabled: bool,
    /// Full URL the request is POSTed to.
    pub base_url: String,
    pub shape: ApiShape,
    /// Model name, sent only by shapes that take one.
    pub model: Option<String>,
    pub timeout_secs: f64,
    pub max_new_tokens: u32,
    pub retries: u32,
    pub backoff_base_secs: f64,
    pub backoff_factor: f64,
    pub max_concurrency: usize,
    #[serde(skip)]
    pub api_key: Option<ApiKey>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            enabled: true,
            base_url: "http://127.0.0.1:8080/generate".into(),
            shape: ApiShape::Minimal,
            model: None,
            timeout_secs: 60.0,
            max_new_tokens: 256,
            retries: 2,
            backoff_base_secs: 1.0,
            backoff_factor: 2.0,
            max_concurrency: 4,
            api_key: None,
        }
    }
}

impl EndpointConfig {
    /// Picks up the key from the environment, if set and non-empty.
    pub fn with_env_key(mut self) -> Self {
        self.api_key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .map(ApiKey::new);
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        positive_secs(self.timeout_secs, "timeout")?;
        positive_secs(self.backoff_base_secs, "backoff base")?;
        if !(self.backoff_factor.is_finite() && self.backoff_factor >= 1.0) {
            return Err(LlmError::InvalidConfig(format!(
                "backoff factor must be at least 1, got {}",
                self.backoff_factor
            )));
        }
        if self.max_new_tokens == 0 {
            return Err(LlmError::InvalidConfig("max_new_tokens must be positive".into()));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(LlmError::InvalidConfig(format!(
                "base_url must be an http(s) URL, got {:?}",
                self.redact(&self.base_url)
            )));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn backoff_base(&self) -> Duration {
        Duration::from_secs_f64(self.backoff_base_secs)
    }

    /// Replaces any occurrence of the key in `text`.
    pub fn redact(&self, text: &str) -> String {
        match &self.api_key {
            Some(k) if !k.0.is_empty() => text.replace(&k.0, "[redacted]"),
            _ => text.to_owned(),
        }
    }
}
