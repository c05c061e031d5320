//! QBP narrative and QBC rationale generation: frame plans, backends,
//! caching, retries and resumable jobs.

mod backend;
mod cache;
mod frames;
mod http;
mod job;
mod orchestrator;
mod retry;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use backend::{
    load_replay, BackendError, GenerationBackend, GenerationRequest, RecordingBackend,
    ReplayBackend, ReplayMap, DEFAULT_QBC_MAX_WORDS, DEFAULT_QBP_MAX_WORDS,
};
pub use cache::{cache_key, CacheEntry, CacheError, DiskCache, MemoryCache, ResponseCache};
pub use frames::{plan_frames, FramePlan, FramePlanError};
pub use http::{
    request_body, response_text, HttpBackend, HttpBackendConfig, DEFAULT_API_KEY_ENV,
    DEFAULT_ENDPOINT_ENV,
};
pub use job::{resume, CompletedResponses, ItemStatus, JobError, JobState, JobStore, JournalEntry};
pub use orchestrator::{default_job_id, SynthError, SynthOutcome, Synthesizer};
pub use retry::RetryPolicy;

/// Frames sampled per video.
pub const DEFAULT_SAMPLE_COUNT: u32 = 16;
/// Frame count assumed for videos missing from `SynthConfig::frame_counts`.
pub const DEFAULT_TOTAL_FRAMES: u32 = 160;

/// One QBP narrative. `source_qids` always lists the whole group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NarrativeRecord {
    pub dataset_id: String,
    pub video_id: String,
    pub video_uri: String,
    pub text: String,
    pub source_qids: Vec<String>,
    pub model_id: String,
    pub prompt_hash: String,
    pub created_at: DateTime<Utc>,
}

/// One QBC rationale for a single QA pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationaleRecord {
    pub dataset_id: String,
    pub video_id: String,
    pub video_uri: String,
    pub qid: String,
    pub question: String,
    pub answer: String,
    pub text: String,
    pub model_id: String,
    pub prompt_hash: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub model_id: String,
    pub temperature: f64,
    pub qbp_max_words: u32,
    pub qbc_max_words: u32,
    /// Maximum number of backend calls in flight.
    pub concurrency: usize,
    pub retry: RetryPolicy,
    pub sample_count: u32,
    pub default_total_frames: u32,
    /// Total frame count per video id.
    pub frame_counts: BTreeMap<String, u32>,
    /// Drop repeated (question, answer) pairs from a group before rendering.
    pub dedup_pairs: bool,
    /// Overrides the job id derived from the inputs.
    pub job_id: Option<String>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            model_id: "gpt-4o".to_string(),
            temperature: 0.0,
            qbp_max_words: DEFAULT_QBP_MAX_WORDS,
            qbc_max_words: DEFAULT_QBC_MAX_WORDS,
            concurrency: 8,
            retry: RetryPolicy::default(),
            sample_count: DEFAULT_SAMPLE_COUNT,
            default_total_frames: DEFAULT_TOTAL_FRAMES,
            frame_counts: BTreeMap::new(),
            dedup_pairs: false,
            job_id: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.model_id.trim().is_empty() {
            return Err("model_id is empty".into());
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(format!("temperature {} must be a finite value >= 0", self.temperature));
        }
        if self.concurrency == 0 {
            return Err("concurrency must be at least 1".into());
        }
        if self.retry.max_attempts == 0 {
            return Err("max_attempts must be at least 1".into());
        }
        if self.sample_count == 0 || self.default_total_frames == 0 {
            return Err("frame counts must be at least 1".into());
        }
        if self.qbp_max_words == 0 || self.qbc_max_words == 0 {
            return Err("output word budgets must be at least 1".into());
        }
        Ok(())
    }

    pub fn total_frames(&self, video_id: &str) -> u32 {
        self.frame_counts
            .get(video_id)
            .copied()
            .unwrap_or(self.default_total_frames)
    }
}
