//! Chat-completion backend over HTTP(S).

use std::time::Duration;

use async_trait::async_trait;
use reqwest::header::{HeaderMap, RETRY_AFTER};
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::backend::{BackendError, GenerationBackend, GenerationRequest};

pub const DEFAULT_ENDPOINT_ENV: &str = "QASYNTH_ENDPOINT";
pub const DEFAULT_API_KEY_ENV: &str = "QASYNTH_API_KEY";

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

pub struct HttpBackend {
    client: reqwest::Client,
    config: HttpBackendConfig,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self { client, config })
    }
}

/// Request body for one generation call. QBC content is a list of parts: the
/// prompt text followed by a frame reference (video URI plus frame indices).
pub fn request_body(request: &GenerationRequest) -> Value {
    let content = match (&request.frame_plan, &request.video_uri) {
        (Some(plan), Some(uri)) => json!([
            {"type": "text", "text": request.prompt.user_text},
            {"type": "video_frames", "video_uri": uri, "frame_indices": plan.indices},
        ]),
        _ => Value::String(request.prompt.user_text.clone()),
    };
    json!({
        "model": request.model_id,
        "messages": [{"role": "user", "content": content}],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens(),
    })
}

/// Extracts `choices[0].message.content`.
pub fn response_text(body: &Value) -> Result<String, BackendError> {
    let content = body
        .pointer("/choices/0/message/content")
        .ok_or_else(|| BackendError::InvalidResponse("missing choices[0].message.content".into()))?;
    match content {
        Value::String(s) if !s.trim().is_empty() => Ok(s.clone()),
        Value::String(_) => Err(BackendError::InvalidResponse("empty content".into())),
        other => Err(BackendError::InvalidResponse(format!(
            "content is not a string: {other}"
        ))),
    }
}

fn retry_after(headers: &HeaderMap) -> Option<Duration> {
    headers
        .get(RETRY_AFTER)?
        .to_str()
        .ok()?
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|s| s.is_finite() && *s >= 0.0)
        .map(Duration::from_secs_f64)
}

#[async_trait]
impl GenerationBackend for HttpBackend {
    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let mut builder = self
            .client
            .post(&self.config.endpoint)
            .json(&request_body(request));
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .await
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        if status == StatusCode::TOO_MANY_REQUESTS {
            return Err(BackendError::RateLimited {
                retry_after: retry_after(response.headers()),
            });
        }
        if !status.is_success() {
            let body = response.text().await.unwrap_or_default();
            return Err(BackendError::Status {
                code: status.as_u16(),
                body: body.chars().take(500).collect(),
            });
        }
        let body: Value = response
            .json()
            .await
            .map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
        response_text(&body)
    }
}
