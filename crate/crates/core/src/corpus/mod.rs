//! Canonical QA records, per-video question groups and corpus statistics.

mod stats;
pub mod synthetic;

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::evalharness::normalize;

pub use stats::{compute_stats, format_mean, CorpusStats, DatasetStats, QaHistogram, STATS_CSV_HEADER};

/// One annotated question-answer pair. Field order is the canonical line
/// format's key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    #[serde(rename = "dataset")]
    pub dataset_id: String,
    pub video_id: String,
    pub video_uri: String,
    pub qid: String,
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub question_type: Option<String>,
    #[serde(default)]
    pub options: Option<Vec<String>>,
    #[serde(default)]
    pub answer_index: Option<usize>,
}

impl QaPair {
    pub fn key(&self) -> (&str, &str, &str) {
        (&self.dataset_id, &self.video_id, &self.qid)
    }

    /// Checks the per-record invariants, returning a human-readable reason.
    pub fn validate(&self) -> Result<(), String> {
        if self.question.trim().is_empty() {
            return Err("question is empty".into());
        }
        if self.answer.trim().is_empty() {
            return Err("answer is empty".into());
        }
        if let Some(idx) = self.answer_index {
            let options = self
                .options
                .as_ref()
                .ok_or("answer_index present without options")?;
            let option = options.get(idx).ok_or_else(|| {
                format!("answer_index {idx} out of range for {} options", options.len())
            })?;
            if normalize(option) != normalize(&self.answer) {
                return Err(format!(
                    "options[{idx}] {option:?} does not match answer {:?}",
                    self.answer
                ));
            }
        }
        Ok(())
    }
}

/// All QA pairs annotated for one video, in source order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionGroup {
    pub dataset_id: String,
    pub video_id: String,
    pub video_uri: String,
    pub pairs: Vec<QaPair>,
    pub group_size: usize,
}

impl QuestionGroup {
    pub fn qids(&self) -> Vec<String> {
        self.pairs.iter().map(|p| p.qid.clone()).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: malformed record: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}: duplicate key {dataset}/{video_id}/{qid} on lines {first_line} and {second_line}")]
    DuplicateKey {
        path: PathBuf,
        dataset: String,
        video_id: String,
        qid: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("video {dataset}/{video_id} has conflicting uris {first:?} and {second:?}")]
    ConflictingUri {
        dataset: String,
        video_id: String,
        first: String,
        second: String,
    },
}

/// Reads a canonical corpus file. When `dataset_id` is given every record
/// must belong to that dataset.
pub fn ingest(path: &Path, dataset_id: Option<&str>) -> Result<Vec<QaPair>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let malformed = |line: usize, reason: String| CorpusError::Malformed {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut pairs = Vec::new();
    let mut seen: HashMap<(String, String, String), usize> = HashMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: QaPair =
            serde_json::from_str(&line).map_err(|e| malformed(line_no, e.to_string()))?;
        pair.validate().map_err(|r| malformed(line_no, r))?;
        if let Some(expected) = dataset_id {
            if pair.dataset_id != expected {
                return Err(malformed(
                    line_no,
                    format!("dataset {:?} where {expected:?} was expected", pair.dataset_id),
                ));
            }
        }
        let key = (
            pair.dataset_id.clone(),
            pair.video_id.clone(),
            pair.qid.clone(),
        );
        if let Some(&first_line) = seen.get(&key) {
            return Err(CorpusError::DuplicateKey {
                path: path.to_path_buf(),
                dataset: key.0,
                video_id: key.1,
                qid: key.2,
                first_line,
                second_line: line_no,
            });
        }
        seen.insert(key, line_no);
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Writes pairs in the canonical line format.
pub fn write_corpus(path: &Path, pairs: &[QaPair]) -> Result<(), crate::jsonl::JsonlError> {
    crate::jsonl::write(path, pairs)
}

/// Groups pairs by `(dataset_id, video_id)`. Groups appear in order of first
/// occurrence and keep the input order of their pairs.
pub fn group(pairs: &[QaPair]) -> Result<Vec<QuestionGroup>, CorpusError> {
    let mut index: HashMap<(&str, &str), usize> = HashMap::new();
    let mut groups: Vec<QuestionGroup> = Vec::new();
    for pair in pairs {
        let key = (pair.dataset_id.as_str(), pair.video_id.as_str());
        match index.get(&key) {
            Some(&i) => {
                let g = &mut groups[i];
                if g.video_uri != pair.video_uri {
                    return Err(CorpusError::ConflictingUri {
                        dataset: pair.dataset_id.clone(),
                        video_id: pair.video_id.clone(),
                        first: g.video_uri.clone(),
                        second: pair.video_uri.clone(),
                    });
                }
                g.pairs.push(pair.clone());
                g.group_size += 1;
            }
            None => {
                index.insert(key, groups.len());
                groups.push(QuestionGroup {
                    dataset_id: pair.dataset_id.clone(),
                    video_id: pair.video_id.clone(),
                    video_uri: pair.video_uri.clone(),
                    pairs: vec![pair.clone()],
                    group_size: 1,
                });
            }
        }
    }
    Ok(groups)
}

/// Flattens groups back into pairs, group by group.
pub fn flatten(groups: &[QuestionGroup]) -> Vec<QaPair> {
    groups.iter().flat_map(|g| g.pairs.iter().cloned()).collect()
}
