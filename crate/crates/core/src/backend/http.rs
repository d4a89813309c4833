use std::time::{Duration, Instant};

use reqwest::blocking::{Client, Response};
use reqwest::header::RETRY_AFTER;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    Backend, BackendConfig, BackendError, CompletionResult, FinishReason, GenerationParams, RetryPolicy, Secret,
};

struct HttpCore {
    backend_id: String,
    endpoint: String,
    params: GenerationParams,
    system_message: Option<&'static str>,
    secret: Option<Secret>,
    retry: RetryPolicy,
    client: Client,
}

impl HttpCore {
    fn new(config: &BackendConfig) -> Result<HttpCore, BackendError> {
        config.validate()?;
        let secret = config.auth_env.as_deref().map(Secret::from_env).transpose()?;
        let client = Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(format!("http client: {e}")))?;
        Ok(HttpCore {
            backend_id: config.backend_id.clone(),
            endpoint: config.endpoint.clone().expect("validated"),
            params: config.params.clone(),
            system_message: config.system_message_text(),
            secret,
            retry: config.retry,
            client,
        })
    }

    fn post(&self, body: &Value) -> Result<Value, BackendError> {
        let mut req = self.client.post(&self.endpoint).json(body);
        if let Some(secret) = &self.secret {
            req = req.bearer_auth(secret.expose());
        }
        let resp = req.send().map_err(|e| BackendError::Network(e.without_url().to_string()))?;
        classify(resp)
    }

    fn call<F>(&self, body: Value, parse: F) -> Result<CompletionResult, BackendError>
    where
        F: Fn(&Value) -> Result<(String, FinishReason), BackendError>,
    {
        self.retry.run(
            || {
                let started = Instant::now();
                let value = self.post(&body)?;
                let (text, finish) = parse(&value)?;
                Ok(CompletionResult::new(text, finish, started.elapsed()))
            },
            std::thread::sleep,
        )
    }
}

fn retry_after(resp: &Response) -> Option<Duration> {
    let raw = resp.headers().get(RETRY_AFTER)?.to_str().ok()?;
    let secs: f64 = raw.trim().parse().ok()?;
    (secs.is_finite() && secs >= 0.0).then(|| Duration::from_secs_f64(secs))
}

fn classify(resp: Response) -> Result<Value, BackendError> {
    let status = resp.status();
    if status == StatusCode::TOO_MANY_REQUESTS {
        return Err(BackendError::RateLimited { retry_after: retry_after(&resp) });
    }
    if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
        return Err(BackendError::Auth(format!("server answered {status}")));
    }
    if status.is_server_error() || status == StatusCode::REQUEST_TIMEOUT {
        return Err(BackendError::Network(format!("server answered {status}")));
    }
    if !status.is_success() {
        let body = resp.text().unwrap_or_default();
        let snippet: String = body.chars().take(200).collect();
        return Err(BackendError::Protocol(format!("server answered {status}: {snippet}")));
    }
    resp.json::<Value>()
        .map_err(|e| BackendError::Protocol(format!("response is not JSON: {e}")))
}

fn finish_reason(raw: Option<&str>) -> FinishReason {
    match raw {
        Some("stop") | Some("eos") | Some("end_turn") | None => FinishReason::Stop,
        Some("length") | Some("max_tokens") => FinishReason::Length,
        Some(_) => FinishReason::Error,
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct TextResponse {
    choices: Vec<TextChoice>,
}

#[derive(Deserialize)]
struct TextChoice {
    text: Option<String>,
    finish_reason: Option<String>,
}

/// Role-based chat-completions client.
pub struct ChatHttpBackend {
    core: HttpCore,
}

impl ChatHttpBackend {
    pub fn new(config: &BackendConfig) -> Result<Self, BackendError> {
        Ok(Self { core: HttpCore::new(config)? })
    }

    /// JSON body of a chat request.
    pub fn request_body(params: &GenerationParams, system_message: Option<&str>, prompt: &str) -> Value {
        let mut messages = Vec::with_capacity(2);
        if let Some(system) = system_message {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": prompt}));
        json!({
            "model": params.model_id,
            "messages": messages,
            "temperature": params.temperature,
            "max_tokens": params.max_response_tokens,
        })
    }

    pub fn parse_response(value: &Value) -> Result<(String, FinishReason), BackendError> {
        let resp: ChatResponse = serde_json::from_value(value.clone())
            .map_err(|e| BackendError::Protocol(format!("unexpected chat response: {e}")))?;
        let choice = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Protocol("chat response has no choices".into()))?;
        Ok((choice.message.content.unwrap_or_default(), finish_reason(choice.finish_reason.as_deref())))
    }
}

impl Backend for ChatHttpBackend {
    fn backend_id(&self) -> &str {
        &self.core.backend_id
    }

    fn params(&self) -> &GenerationParams {
        &self.core.params
    }

    fn system_message(&self) -> Option<&str> {
        self.core.system_message
    }

    fn complete(&self, prompt: &str) -> Result<CompletionResult, BackendError> {
        let body = Self::request_body(&self.core.params, self.core.system_message, prompt);
        self.core.call(body, Self::parse_response)
    }
}

/// Prompt-in, text-out completions client. Sends no system message.
pub struct CompletionHttpBackend {
    core: HttpCore,
}

impl CompletionHttpBackend {
    pub fn new(config: &BackendConfig) -> Result<Self, BackendError> {
        let mut core = HttpCore::new(config)?;
        core.system_message = None;
        Ok(Self { core })
    }

    pub fn request_body(params: &GenerationParams, prompt: &str) -> Value {
        json!({
            "model": params.model_id,
            "prompt": prompt,
            "temperature": params.temperature,
            "max_tokens": params.max_response_tokens,
        })
    }

    pub fn parse_response(value: &Value) -> Result<(String, FinishReason), BackendError> {
        let resp: TextResponse = serde_json::from_value(value.clone())
            .map_err(|e| BackendError::Protocol(format!("unexpected completion response: {e}")))?;
        let choice = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Protocol("completion response has no choices".into()))?;
        Ok((choice.text.unwrap_or_default(), finish_reason(choice.finish_reason.as_deref())))
    }
}

impl Backend for CompletionHttpBackend {
    fn backend_id(&self) -> &str {
        &self.core.backend_id
    }

    fn params(&self) -> &GenerationParams {
        &self.core.params
    }

    fn system_message(&self) -> Option<&str> {
        None
    }

    fn complete(&self, prompt: &str) -> Result<CompletionResult, BackendError> {
        let body = Self::request_body(&self.core.params, prompt);
        self.core.call(body, Self::parse_response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chat_body_carries_cap_and_roles() {
        let params = GenerationParams::zero_shot("gpt-4-1106-preview");
        let body = ChatHttpBackend::request_body(&params, Some("SYS"), "PROMPT");
        assert_eq!(body["max_tokens"], 75);
        assert_eq!(body["temperature"], 0.1);
        assert_eq!(body["model"], "gpt-4-1106-preview");
        assert_eq!(body["messages"][0], json!({"role": "system", "content": "SYS"}));
        assert_eq!(body["messages"][1], json!({"role": "user", "content": "PROMPT"}));

        let body = ChatHttpBackend::request_body(&params, None, "PROMPT");
        assert_eq!(body["messages"].as_array().unwrap().len(), 1);
    }

    #[test]
    fn chat_response_parsing() {
        let v = json!({"choices": [{"message": {"role": "assistant", "content": "negative"}, "finish_reason": "stop"}]});
        assert_eq!(ChatHttpBackend::parse_response(&v).unwrap(), ("negative".into(), FinishReason::Stop));
        let v = json!({"choices": [{"message": {"content": null}, "finish_reason": "length"}]});
        assert_eq!(ChatHttpBackend::parse_response(&v).unwrap(), (String::new(), FinishReason::Length));
        assert!(matches!(ChatHttpBackend::parse_response(&json!({"choices": []})), Err(BackendError::Protocol(_))));
        assert!(matches!(ChatHttpBackend::parse_response(&json!({"error": "x"})), Err(BackendError::Protocol(_))));
    }

    #[test]
    fn completion_response_parsing() {
        let v = json!({"choices": [{"text": " positive", "finish_reason": "length"}]});
        assert_eq!(
            CompletionHttpBackend::parse_response(&v).unwrap(),
            (" positive".into(), FinishReason::Length)
        );
        let body = CompletionHttpBackend::request_body(&GenerationParams::fine_tuned("flan"), "p");
        assert_eq!(body["temperature"], 1.0);
        assert_eq!(body["prompt"], "p");
    }
}
