//! Text-generation backends.
//!
//! Three kinds sit behind the [`Backend`] trait:
//!
//! * `chat_http`: the hosted chat-completions protocol (role-tagged
//!   messages, first choice's message content comes back);
//! * `completion_http`: the plain prompt-in/text-out completions protocol;
//! * `replay`: answers from a recorded transcript, for deterministic tests
//!   and for re-scoring a past run bit for bit.
//!
//! Backends are `Send + Sync` and meant to be shared across worker threads.

mod http;
mod replay;
mod retry;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::fields_digest;
use crate::prompts::SYSTEM_MESSAGE;

pub use http::{ChatHttpBackend, CompletionHttpBackend};
pub use replay::{
    load_transcript, read_transcript, record_transcript, save_transcript, RecordingBackend, ReplayBackend,
    TranscriptEntry,
};
pub use retry::RetryPolicy;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("network error: {0}")]
    Network(String),
    #[error("rate limited (retry after {retry_after:?})")]
    RateLimited { retry_after: Option<Duration> },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("gave up after {attempts} attempts: {last}")]
    ExhaustedRetries { attempts: u32, last: Box<BackendError> },
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Network(_) | BackendError::RateLimited { .. })
    }

    /// Errors that make every further call pointless.
    pub fn is_fatal(&self) -> bool {
        matches!(self, BackendError::Auth(_) | BackendError::Protocol(_) | BackendError::Config(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionResult {
    pub text: String,
    pub finish_reason: FinishReason,
    pub latency: Duration,
}

impl CompletionResult {
    /// Enforces that an empty text never carries `Stop`.
    pub fn new(text: String, finish_reason: FinishReason, latency: Duration) -> Self {
        let finish_reason = if text.is_empty() && finish_reason == FinishReason::Stop {
            FinishReason::Error
        } else {
            finish_reason
        };
        Self { text, finish_reason, latency }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationParams {
    pub model_id: String,
    #[serde(default = "GenerationParams::default_temperature")]
    pub temperature: f64,
    #[serde(default = "GenerationParams::default_max_tokens")]
    pub max_response_tokens: u32,
}

impl GenerationParams {
    fn default_temperature() -> f64 {
        0.1
    }

    fn default_max_tokens() -> u32 {
        75
    }

    /// Zero-shot defaults: temperature 0.1, 75-token answer cap.
    pub fn zero_shot(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            temperature: Self::default_temperature(),
            max_response_tokens: Self::default_max_tokens(),
        }
    }

    /// Settings for scoring fine-tuned checkpoints: temperature 1.0.
    pub fn fine_tuned(model_id: impl Into<String>) -> Self {
        Self { temperature: 1.0, ..Self::zero_shot(model_id) }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(BackendError::Config(format!("temperature {} must be finite and >= 0", self.temperature)));
        }
        if self.max_response_tokens == 0 {
            return Err(BackendError::Config("max_response_tokens must be >= 1".into()));
        }
        if self.model_id.trim().is_empty() {
            return Err(BackendError::Config("model_id is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    ChatHttp,
    CompletionHttp,
    Replay,
}

/// A backend description as read from a TOML config file.
///
/// Secrets are never stored here; `auth_env` names the environment variable
/// holding the API key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub backend_id: String,
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<PathBuf>,
    /// Send the role-setting system message. Defaults to on for chat
    /// backends, off otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_message: Option<bool>,
    /// Append the short-answer instruction to every prompt.
    #[serde(default)]
    pub brevity_suffix: bool,
    #[serde(default = "BackendConfig::default_timeout")]
    pub timeout_secs: u64,
    pub params: GenerationParams,
    #[serde(default)]
    pub retry: RetryPolicy,
}

impl BackendConfig {
    fn default_timeout() -> u64 {
        120
    }

    pub fn replay(backend_id: &str, transcript: PathBuf, params: GenerationParams) -> BackendConfig {
        BackendConfig {
            backend_id: backend_id.to_string(),
            kind: BackendKind::Replay,
            endpoint: None,
            auth_env: None,
            transcript: Some(transcript),
            system_message: None,
            brevity_suffix: false,
            timeout_secs: Self::default_timeout(),
            params,
            retry: RetryPolicy::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<BackendConfig, BackendError> {
        let cfg: BackendConfig = toml::from_str(text).map_err(|e| BackendError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load from a TOML file; a relative `transcript` path is resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<BackendConfig, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(t), Some(dir)) = (cfg.transcript.as_ref(), path.parent()) {
            if t.is_relative() {
                cfg.transcript = Some(dir.join(t));
            }
        }
        Ok(cfg)
    }

    pub fn uses_system_message(&self) -> bool {
        self.system_message.unwrap_or(self.kind == BackendKind::ChatHttp)
    }

    pub fn system_message_text(&self) -> Option<&'static str> {
        self.uses_system_message().then_some(SYSTEM_MESSAGE)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        self.params.validate()?;
        self.retry.validate()?;
        if self.backend_id.trim().is_empty() {
            return Err(BackendError::Config("backend_id is empty".into()));
        }
        let http = matches!(self.kind, BackendKind::ChatHttp | BackendKind::CompletionHttp);
        if http != self.endpoint.is_some() {
            return Err(BackendError::Config(if http {
                "http backends need an endpoint".into()
            } else {
                "endpoint is only valid for http backends".into()
            }));
        }
        if self.kind == BackendKind::Replay && self.transcript.is_none() {
            return Err(BackendError::Config("replay backend needs a transcript path".into()));
        }
        if self.kind == BackendKind::CompletionHttp && self.system_message == Some(true) {
            return Err(BackendError::Config("plain completion backends have no system role".into()));
        }
        Ok(())
    }

    /// Digest of everything that influences generated text.
    pub fn digest(&self) -> String {
        config_digest(&self.backend_id, &self.params, self.system_message_text())
    }
}

pub(crate) fn config_digest(backend_id: &str, params: &GenerationParams, system: Option<&str>) -> String {
    let temp = params.temperature.to_bits().to_le_bytes();
    let max = params.max_response_tokens.to_le_bytes();
    fields_digest([
        backend_id.as_bytes(),
        params.model_id.as_bytes(),
        &[system.is_some() as u8],
        system.unwrap_or("").as_bytes(),
        &temp,
        &max,
    ])
}

/// Cache and transcript key for one request: a SHA-256 over model id,
/// system message, prompt, temperature and answer cap.
pub fn request_key(params: &GenerationParams, system_message: Option<&str>, prompt: &str) -> String {
    let temp = params.temperature.to_bits().to_le_bytes();
    let max = params.max_response_tokens.to_le_bytes();
    fields_digest([
        params.model_id.as_bytes(),
        &[system_message.is_some() as u8],
        system_message.unwrap_or("").as_bytes(),
        prompt.as_bytes(),
        &temp,
        &max,
    ])
}

/// An API key read from the environment. Never printed.
#[derive(Clone)]
pub struct Secret(String);

impl Secret {
    pub fn from_env(var: &str) -> Result<Secret, BackendError> {
        match std::env::var(var) {
            Ok(v) if !v.trim().is_empty() => Ok(Secret(v)),
            _ => Err(BackendError::Auth(format!("environment variable {var} is not set"))),
        }
    }

    pub(crate) fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(<redacted>)")
    }
}

pub trait Backend: Send + Sync {
    fn backend_id(&self) -> &str;
    fn params(&self) -> &GenerationParams;
    fn system_message(&self) -> Option<&str>;
    fn complete(&self, prompt: &str) -> Result<CompletionResult, BackendError>;

    fn request_key(&self, prompt: &str) -> String {
        request_key(self.params(), self.system_message(), prompt)
    }

    fn digest(&self) -> String {
        config_digest(self.backend_id(), self.params(), self.system_message())
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }
    fn params(&self) -> &GenerationParams {
        (**self).params()
    }
    fn system_message(&self) -> Option<&str> {
        (**self).system_message()
    }
    fn complete(&self, prompt: &str) -> Result<CompletionResult, BackendError> {
        (**self).complete(prompt)
    }
    fn request_key(&self, prompt: &str) -> String {
        (**self).request_key(prompt)
    }
    fn digest(&self) -> String {
        (**self).digest()
    }
}

/// Build a backend from its config. Authentication is checked here, before
/// any request is sent.
pub fn build_backend(config: &BackendConfig) -> Result<Arc<dyn Backend>, BackendError> {
    config.validate()?;
    Ok(match config.kind {
        BackendKind::ChatHttp => Arc::new(ChatHttpBackend::new(config)?),
        BackendKind::CompletionHttp => Arc::new(CompletionHttpBackend::new(config)?),
        BackendKind::Replay => Arc::new(ReplayBackend::from_config(config)?),
    })
}
