//! Persistent job state: `job.json` records the work set once, and
//! `journal.jsonl` appends one line per finished item. Replaying the journal
//! reconstructs the state after a crash or interrupt.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cache::CacheEntry;
use crate::promptkit::PromptKind;

const JOB_FILE: &str = "job.json";
const JOURNAL_FILE: &str = "journal.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobState {
    pub job_id: String,
    pub kind: PromptKind,
    pub pending: BTreeSet<String>,
    pub done: BTreeSet<String>,
    pub failed: BTreeSet<String>,
    pub attempt_counts: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub key: String,
    pub status: ItemStatus,
    pub attempts: u32,
    /// The generated response, present on `done` entries so a resumed job can
    /// rebuild its records without calling the backend again.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<CacheEntry>,
}

/// Responses of completed items, keyed by work-item key.
pub type CompletedResponses = BTreeMap<String, CacheEntry>;

#[derive(Debug, thiserror::Error)]
pub enum JobError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no job state at {0}")]
    NotFound(PathBuf),
    #[error("{path}:{line}: corrupted job state: {message}")]
    Corrupted {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("job {job_id} exists with a different {what}")]
    Mismatch { job_id: String, what: &'static str },
}

impl JobState {
    pub fn new(job_id: &str, kind: PromptKind, keys: impl IntoIterator<Item = String>) -> Self {
        Self {
            job_id: job_id.to_string(),
            kind,
            pending: keys.into_iter().collect(),
            done: BTreeSet::new(),
            failed: BTreeSet::new(),
            attempt_counts: BTreeMap::new(),
        }
    }

    /// Applies one journal entry. Unknown keys are rejected.
    pub fn apply(&mut self, entry: &JournalEntry) -> Result<(), String> {
        let known = self.pending.remove(&entry.key)
            | self.done.remove(&entry.key)
            | self.failed.remove(&entry.key);
        if !known {
            return Err(format!("key {:?} is not part of the work set", entry.key));
        }
        match entry.status {
            ItemStatus::Done => self.done.insert(entry.key.clone()),
            ItemStatus::Failed => self.failed.insert(entry.key.clone()),
        };
        *self.attempt_counts.entry(entry.key.clone()).or_default() += entry.attempts;
        Ok(())
    }

    pub fn work_set(&self) -> BTreeSet<String> {
        self.pending
            .iter()
            .chain(&self.done)
            .chain(&self.failed)
            .cloned()
            .collect()
    }

    /// Pending, done and failed are pairwise disjoint.
    pub fn is_consistent(&self) -> bool {
        self.pending.is_disjoint(&self.done)
            && self.pending.is_disjoint(&self.failed)
            && self.done.is_disjoint(&self.failed)
    }

    pub fn is_complete(&self) -> bool {
        self.pending.is_empty() && self.failed.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JobHeader {
    job_id: String,
    kind: PromptKind,
    work: Vec<String>,
}

/// Owns one job directory. All writes go through this value, so job state
/// has a single writer.
#[derive(Debug)]
pub struct JobStore {
    dir: PathBuf,
    journal: File,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> JobError + '_ {
    move |source| JobError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads the persisted state of `job_id` under `root`.
pub fn resume(root: &Path, job_id: &str) -> Result<JobState, JobError> {
    replay(root, job_id).map(|(state, _)| state)
}

fn replay(root: &Path, job_id: &str) -> Result<(JobState, CompletedResponses), JobError> {
    let dir = root.join(job_id);
    let header_path = dir.join(JOB_FILE);
    if !header_path.exists() {
        return Err(JobError::NotFound(dir));
    }
    let body = std::fs::read_to_string(&header_path).map_err(io_err(&header_path))?;
    let header: JobHeader = serde_json::from_str(&body).map_err(|e| JobError::Corrupted {
        path: header_path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if header.job_id != job_id {
        return Err(JobError::Corrupted {
            path: header_path,
            line: 1,
            message: format!("header names job {:?}", header.job_id),
        });
    }
    let mut state = JobState::new(job_id, header.kind, header.work);
    let mut responses = CompletedResponses::new();

    let journal_path = dir.join(JOURNAL_FILE);
    if journal_path.exists() {
        let file = File::open(&journal_path).map_err(io_err(&journal_path))?;
        let mut body = String::new();
        let mut reader = BufReader::new(file);
        let mut line_no = 0;
        loop {
            body.clear();
            let n = reader.read_line(&mut body).map_err(io_err(&journal_path))?;
            if n == 0 {
                break;
            }
            line_no += 1;
            let corrupted = |message: String| JobError::Corrupted {
                path: journal_path.clone(),
                line: line_no,
                message,
            };
            if !body.ends_with('\n') {
                return Err(corrupted("truncated journal line".into()));
            }
            let entry: JournalEntry =
                serde_json::from_str(body.trim_end()).map_err(|e| corrupted(e.to_string()))?;
            state.apply(&entry).map_err(corrupted)?;
            match (entry.status, entry.response) {
                (ItemStatus::Done, Some(response)) => {
                    responses.insert(entry.key, response);
                }
                (ItemStatus::Done, None) => {
                    return Err(corrupted("done entry without a response".into()));
                }
                (ItemStatus::Failed, _) => {
                    responses.remove(&entry.key);
                }
            }
        }
    }
    Ok((state, responses))
}

impl JobStore {
    /// Creates the job directory, or reopens it if it already exists. An
    /// existing job must have the same kind and work set.
    pub fn open_or_create(
        root: &Path,
        job_id: &str,
        kind: PromptKind,
        keys: &[String],
    ) -> Result<(Self, JobState, CompletedResponses), JobError> {
        let dir = root.join(job_id);
        let header_path = dir.join(JOB_FILE);
        let (state, responses) = if header_path.exists() {
            let (state, responses) = replay(root, job_id)?;
            if state.kind != kind {
                return Err(JobError::Mismatch {
                    job_id: job_id.to_string(),
                    what: "kind",
                });
            }
            if state.work_set() != keys.iter().cloned().collect::<BTreeSet<_>>() {
                return Err(JobError::Mismatch {
                    job_id: job_id.to_string(),
                    what: "work set",
                });
            }
            (state, responses)
        } else {
            std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let header = JobHeader {
                job_id: job_id.to_string(),
                kind,
                work: keys.to_vec(),
            };
            let tmp = dir.join("job.json.tmp");
            std::fs::write(&tmp, serde_json::to_string(&header).expect("header serializes"))
                .map_err(io_err(&tmp))?;
            std::fs::rename(&tmp, &header_path).map_err(io_err(&header_path))?;
            (JobState::new(job_id, kind, keys.iter().cloned()), CompletedResponses::new())
        };
        let journal_path = dir.join(JOURNAL_FILE);
        let journal = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&journal_path)
            .map_err(io_err(&journal_path))?;
        Ok((Self { dir, journal }, state, responses))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Appends one entry as a single write followed by a flush.
    pub fn append(&mut self, entry: &JournalEntry) -> Result<(), JobError> {
        let line = crate::jsonl::to_line(entry);
        let path = self.dir.join(JOURNAL_FILE);
        self.journal
            .write_all(line.as_bytes())
            .and_then(|_| self.journal.flush())
            .map_err(io_err(&path))
    }
}
