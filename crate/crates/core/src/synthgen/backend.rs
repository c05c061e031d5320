use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::frames::FramePlan;
use crate::promptkit::{PromptKind, RenderedPrompt};

/// Default output budgets in words; QBC rationales run longest.
pub const DEFAULT_QBP_MAX_WORDS: u32 = 250;
pub const DEFAULT_QBC_MAX_WORDS: u32 = 400;

/// One generation call. QBP requests are text-only; QBC requests carry the
/// video locator and its frame plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: RenderedPrompt,
    pub frame_plan: Option<FramePlan>,
    pub video_uri: Option<String>,
    pub model_id: String,
    pub temperature: f64,
    pub max_output_words: u32,
}

impl GenerationRequest {
    pub fn qbp(prompt: RenderedPrompt, model_id: &str, temperature: f64, max_output_words: u32) -> Self {
        debug_assert_eq!(prompt.kind, PromptKind::Qbp);
        Self {
            prompt,
            frame_plan: None,
            video_uri: None,
            model_id: model_id.to_string(),
            temperature,
            max_output_words,
        }
    }

    pub fn qbc(
        prompt: RenderedPrompt,
        video_uri: &str,
        frame_plan: FramePlan,
        model_id: &str,
        temperature: f64,
        max_output_words: u32,
    ) -> Self {
        debug_assert_eq!(prompt.kind, PromptKind::Qbc);
        Self {
            prompt,
            frame_plan: Some(frame_plan),
            video_uri: Some(video_uri.to_string()),
            model_id: model_id.to_string(),
            temperature,
            max_output_words,
        }
    }

    /// Token budget sent on the wire: four tokens per three words, rounded up.
    pub fn max_tokens(&self) -> u32 {
        (self.max_output_words * 4).div_ceil(3)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited")]
    RateLimited { retry_after: Option<Duration> },
    #[error("HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("no replay entry for prompt {0}")]
    ReplayMiss(String),
}

impl BackendError {
    /// Client errors other than rate limiting are final; everything else may
    /// succeed on a later attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_)
            | BackendError::RateLimited { .. }
            | BackendError::InvalidResponse(_) => true,
            BackendError::Status { code, .. } => *code >= 500 || *code == 408,
            BackendError::ReplayMiss(_) => false,
        }
    }

    pub fn retry_after(&self) -> Option<Duration> {
        match self {
            BackendError::RateLimited { retry_after } => *retry_after,
            _ => None,
        }
    }
}

#[async_trait]
pub trait GenerationBackend: Send + Sync {
    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError>;
}

/// Replay file: a JSON object mapping prompt hash to canned response text.
pub type ReplayMap = BTreeMap<String, String>;

pub fn load_replay(path: &Path) -> Result<ReplayMap, crate::jsonl::JsonlError> {
    crate::jsonl::read_document(path)
}

/// Serves canned responses keyed by prompt hash. Unknown prompts fail
/// without retry.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    responses: ReplayMap,
}

impl ReplayBackend {
    pub fn new(responses: ReplayMap) -> Self {
        Self { responses }
    }

    pub fn from_file(path: &Path) -> Result<Self, crate::jsonl::JsonlError> {
        load_replay(path).map(Self::new)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

#[async_trait]
impl GenerationBackend for ReplayBackend {
    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        self.responses
            .get(&request.prompt.prompt_hash)
            .cloned()
            .ok_or_else(|| BackendError::ReplayMiss(request.prompt.prompt_hash.clone()))
    }
}

/// Wraps a live backend and captures every successful response so the run
/// can be replayed later.
pub struct RecordingBackend {
    inner: Arc<dyn GenerationBackend>,
    captured: Mutex<ReplayMap>,
    path: PathBuf,
}

impl RecordingBackend {
    /// Starts from the existing replay file at `path`, if any.
    pub fn new(inner: Arc<dyn GenerationBackend>, path: PathBuf) -> Result<Self, crate::jsonl::JsonlError> {
        let captured = if path.exists() {
            load_replay(&path)?
        } else {
            ReplayMap::new()
        };
        Ok(Self {
            inner,
            captured: Mutex::new(captured),
            path,
        })
    }

    pub fn save(&self) -> Result<(), crate::jsonl::JsonlError> {
        let map = self.captured.lock().expect("replay map poisoned").clone();
        crate::jsonl::write_document(&self.path, &map)
    }

    pub fn captured(&self) -> ReplayMap {
        self.captured.lock().expect("replay map poisoned").clone()
    }
}

#[async_trait]
impl GenerationBackend for RecordingBackend {
    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let text = self.inner.generate(request).await?;
        self.captured
            .lock()
            .expect("replay map poisoned")
            .insert(request.prompt.prompt_hash.clone(), text.clone());
        Ok(text)
    }
}
