use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use chrono::Utc;
use futures::stream::{self, StreamExt};
use tracing::{debug, warn};

use super::backend::{BackendError, GenerationBackend, GenerationRequest};
use super::cache::{cache_key, CacheEntry, CacheError, ResponseCache};
use super::frames::{plan_frames, FramePlanError};
use super::job::{CompletedResponses, ItemStatus, JobError, JobState, JobStore, JournalEntry};
use super::{NarrativeRecord, RationaleRecord, SynthConfig};
use crate::corpus::{QaPair, QuestionGroup};
use crate::evalharness::normalize;
use crate::hashing::sha256_fields;
use crate::promptkit::{PromptKind, TemplateSet};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Job(#[from] JobError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("{video_id}: {source}")]
    FramePlan {
        video_id: String,
        #[source]
        source: FramePlanError,
    },
    #[error("duplicate work item {0}")]
    DuplicateItem(String),
}

/// Records for completed items, in input order, plus the job state.
#[derive(Debug, Clone)]
pub struct SynthOutcome<R> {
    pub records: Vec<R>,
    pub state: JobState,
    pub backend_calls: u64,
    pub cache_hits: u64,
    /// True when the run was interrupted before every item started.
    pub stopped: bool,
}

/// Job id derived from the kind, model and work set.
pub fn default_job_id(kind: PromptKind, model_id: &str, keys: &[String]) -> String {
    let joined = keys.join("\n");
    sha256_fields([kind.as_str().as_bytes(), model_id.as_bytes(), joined.as_bytes()])[..16]
        .to_string()
}

struct WorkItem {
    key: String,
    request: GenerationRequest,
}

enum ItemResult {
    Done {
        entry: CacheEntry,
        attempts: u32,
        from_cache: bool,
    },
    Failed {
        attempts: u32,
        error: BackendError,
    },
    Skipped,
    Fatal(CacheError),
}

pub struct Synthesizer {
    templates: TemplateSet,
    backend: Arc<dyn GenerationBackend>,
    cache: Arc<dyn ResponseCache>,
    config: SynthConfig,
    job_root: Option<PathBuf>,
    stop: Arc<AtomicBool>,
}

impl Synthesizer {
    pub fn new(
        templates: TemplateSet,
        backend: Arc<dyn GenerationBackend>,
        cache: Arc<dyn ResponseCache>,
        config: SynthConfig,
    ) -> Self {
        Self {
            templates,
            backend,
            cache,
            config,
            job_root: None,
            stop: Arc::new(AtomicBool::new(false)),
        }
    }

    /// Persists job state under `root/<job_id>/` so interrupted runs resume.
    pub fn with_job_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.job_root = Some(root.into());
        self
    }

    /// Shares an externally owned stop flag, e.g. one raised by a signal
    /// handler.
    pub fn with_stop_flag(mut self, flag: Arc<AtomicBool>) -> Self {
        self.stop = flag;
        self
    }

    /// Setting the flag stops new items from starting; in-flight calls finish.
    pub fn stop_handle(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stop)
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub async fn synthesize_qbp(
        &self,
        groups: &[QuestionGroup],
    ) -> Result<SynthOutcome<NarrativeRecord>, SynthError> {
        self.config.validate().map_err(SynthError::Config)?;
        let mut items = Vec::with_capacity(groups.len());
        for group in groups {
            let prompt = if self.config.dedup_pairs {
                let mut deduped = group.clone();
                deduped.pairs = dedup_pairs(&group.pairs);
                self.templates.render_qbp(&deduped)
            } else {
                self.templates.render_qbp(group)
            };
            items.push(WorkItem {
                key: format!("{}/{}", group.dataset_id, group.video_id),
                request: GenerationRequest::qbp(
                    prompt,
                    &self.config.model_id,
                    self.config.temperature,
                    self.config.qbp_max_words,
                ),
            });
        }
        self.run(PromptKind::Qbp, items, |i, item, entry| {
            let group = &groups[i];
            NarrativeRecord {
                dataset_id: group.dataset_id.clone(),
                video_id: group.video_id.clone(),
                video_uri: group.video_uri.clone(),
                text: entry.text.clone(),
                source_qids: group.qids(),
                model_id: entry.model_id.clone(),
                prompt_hash: item.request.prompt.prompt_hash.clone(),
                created_at: entry.created_at,
            }
        })
        .await
    }

    pub async fn synthesize_qbc(
        &self,
        pairs: &[QaPair],
    ) -> Result<SynthOutcome<RationaleRecord>, SynthError> {
        self.config.validate().map_err(SynthError::Config)?;
        let mut items = Vec::with_capacity(pairs.len());
        for pair in pairs {
            let plan = plan_frames(
                &pair.video_id,
                self.config.total_frames(&pair.video_id),
                self.config.sample_count,
            )
            .map_err(|source| SynthError::FramePlan {
                video_id: pair.video_id.clone(),
                source,
            })?;
            items.push(WorkItem {
                key: format!("{}/{}/{}", pair.dataset_id, pair.video_id, pair.qid),
                request: GenerationRequest::qbc(
                    self.templates.render_qbc(pair),
                    &pair.video_uri,
                    plan,
                    &self.config.model_id,
                    self.config.temperature,
                    self.config.qbc_max_words,
                ),
            });
        }
        self.run(PromptKind::Qbc, items, |i, item, entry| {
            let pair = &pairs[i];
            RationaleRecord {
                dataset_id: pair.dataset_id.clone(),
                video_id: pair.video_id.clone(),
                video_uri: pair.video_uri.clone(),
                qid: pair.qid.clone(),
                question: pair.question.clone(),
                answer: pair.answer.clone(),
                text: entry.text.clone(),
                model_id: entry.model_id.clone(),
                prompt_hash: item.request.prompt.prompt_hash.clone(),
                created_at: entry.created_at,
            }
        })
        .await
    }

    async fn run<R>(
        &self,
        kind: PromptKind,
        items: Vec<WorkItem>,
        build: impl Fn(usize, &WorkItem, &CacheEntry) -> R,
    ) -> Result<SynthOutcome<R>, SynthError> {
        let keys: Vec<String> = items.iter().map(|w| w.key.clone()).collect();
        let mut seen = HashSet::with_capacity(keys.len());
        for key in &keys {
            if !seen.insert(key.as_str()) {
                return Err(SynthError::DuplicateItem(key.clone()));
            }
        }
        let job_id = self
            .config
            .job_id
            .clone()
            .unwrap_or_else(|| default_job_id(kind, &self.config.model_id, &keys));

        let (mut store, mut state, completed) = match &self.job_root {
            Some(root) => {
                let (store, state, completed) = JobStore::open_or_create(root, &job_id, kind, &keys)?;
                (Some(store), state, completed)
            }
            None => (
                None,
                JobState::new(&job_id, kind, keys.iter().cloned()),
                CompletedResponses::new(),
            ),
        };

        let mut entries: Vec<Option<CacheEntry>> = vec![None; items.len()];
        let mut todo = Vec::new();
        for (i, item) in items.iter().enumerate() {
            match completed.get(&item.key) {
                Some(entry) if state.done.contains(&item.key) => entries[i] = Some(entry.clone()),
                _ => todo.push(i),
            }
        }
        debug!(job_id, total = items.len(), todo = todo.len(), "starting synthesis");

        let mut backend_calls = 0u64;
        let mut cache_hits = 0u64;
        let mut stopped = false;
        let items_ref = &items;
        let mut results = stream::iter(todo)
            .map(|i| async move { (i, self.process(&items_ref[i].request).await) })
            .buffer_unordered(self.config.concurrency);

        while let Some((i, result)) = results.next().await {
            let key = &items[i].key;
            let journal = match result {
                ItemResult::Skipped => {
                    stopped = true;
                    continue;
                }
                ItemResult::Fatal(err) => return Err(err.into()),
                ItemResult::Done {
                    entry,
                    attempts,
                    from_cache,
                } => {
                    if from_cache {
                        cache_hits += 1;
                    }
                    backend_calls += u64::from(attempts);
                    entries[i] = Some(entry.clone());
                    JournalEntry {
                        key: key.clone(),
                        status: ItemStatus::Done,
                        attempts,
                        response: Some(entry),
                    }
                }
                ItemResult::Failed { attempts, error } => {
                    warn!(key, attempts, %error, "item failed");
                    backend_calls += u64::from(attempts);
                    JournalEntry {
                        key: key.clone(),
                        status: ItemStatus::Failed,
                        attempts,
                        response: None,
                    }
                }
            };
            state
                .apply(&journal)
                .expect("work items are part of the job");
            if let Some(store) = store.as_mut() {
                store.append(&journal)?;
            }
        }
        drop(results);

        let records = items
            .iter()
            .enumerate()
            .filter_map(|(i, item)| entries[i].as_ref().map(|e| build(i, item, e)))
            .collect();
        Ok(SynthOutcome {
            records,
            state,
            backend_calls,
            cache_hits,
            stopped,
        })
    }

    async fn process(&self, request: &GenerationRequest) -> ItemResult {
        if self.stop.load(Ordering::SeqCst) {
            return ItemResult::Skipped;
        }
        let key = cache_key(request);
        match self.cache.get(&key) {
            Ok(Some(entry)) => {
                return ItemResult::Done {
                    entry,
                    attempts: 0,
                    from_cache: true,
                }
            }
            Ok(None) => {}
            Err(err) => return ItemResult::Fatal(err),
        }

        let policy = &self.config.retry;
        let mut attempts = 0;
        loop {
            attempts += 1;
            let error = match self.backend.generate(request).await {
                Ok(text) if !text.trim().is_empty() => {
                    let entry = CacheEntry {
                        text,
                        model_id: request.model_id.clone(),
                        created_at: Utc::now(),
                    };
                    if let Err(err) = self.cache.put(&key, &entry) {
                        return ItemResult::Fatal(err);
                    }
                    return ItemResult::Done {
                        entry,
                        attempts,
                        from_cache: false,
                    };
                }
                Ok(_) => BackendError::InvalidResponse("empty response text".into()),
                Err(err) => err,
            };
            if !error.is_retryable() || attempts >= policy.max_attempts {
                return ItemResult::Failed { attempts, error };
            }
            let delay = policy.delay(attempts, error.retry_after());
            debug!(attempts, ?delay, %error, "retrying");
            if !delay.is_zero() {
                tokio::time::sleep(delay).await;
            }
        }
    }
}

/// Keeps the first occurrence of each normalized (question, answer) pair.
fn dedup_pairs(pairs: &[QaPair]) -> Vec<QaPair> {
    let mut seen = HashSet::new();
    pairs
        .iter()
        .filter(|p| seen.insert((normalize(&p.question), normalize(&p.answer))))
        .cloned()
        .collect()
}
