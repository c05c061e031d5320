use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{aggregate, Dimension, EvalItem, EvalSummary, RatingRecord};
use crate::jsonl::{self, JsonlError};

/// Why a rating was refused. Each variant maps to one HTTP status.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RatingError {
    #[error("unknown item {0}")]
    UnknownItem(String),
    #[error("evaluator {evaluator} is not assigned to item {item}")]
    NotAssigned { item: String, evaluator: String },
    #[error("{dimension} does not apply to {method} items")]
    Inapplicable { dimension: Dimension, method: &'static str },
    #[error("score {0} is outside 1..5")]
    ScoreOutOfRange(i64),
}

impl RatingError {
    pub fn class(&self) -> &'static str {
        match self {
            RatingError::UnknownItem(_) => "unknown_item",
            RatingError::NotAssigned { .. } => "not_assigned",
            RatingError::Inapplicable { .. } => "inapplicable_dimension",
            RatingError::ScoreOutOfRange(_) => "score_out_of_range",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Rating(#[from] RatingError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: stored rating rejected: {source}")]
    InvalidStored {
        path: PathBuf,
        line: usize,
        #[source]
        source: RatingError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubmitOutcome {
    Created,
    Replaced,
}

#[derive(Debug, Serialize)]
struct AuditEntry<'a> {
    at: DateTime<Utc>,
    event: &'static str,
    item_id: &'a str,
    evaluator_id: &'a str,
    dimension: Dimension,
    previous_score: i64,
    score: i64,
}

type Key = (String, String, Dimension);

struct Writer {
    ratings: Option<(PathBuf, File)>,
    audit: Option<(PathBuf, File)>,
}

/// Ratings keyed by (item, evaluator, dimension), last write wins. Writes go
/// through one mutex; readers take a cheap snapshot of the current map.
pub struct RatingStore {
    items: Vec<EvalItem>,
    index: HashMap<String, usize>,
    current: RwLock<Arc<BTreeMap<Key, RatingRecord>>>,
    writer: Mutex<Writer>,
}

fn open_append(path: &Path) -> Result<File, StoreError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| StoreError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })
}

impl RatingStore {
    /// In-memory store with no persistence.
    pub fn in_memory(items: Vec<EvalItem>) -> Self {
        Self::build(items, BTreeMap::new(), None, None)
    }

    /// Opens a persistent store. Existing ratings in `ratings_path` are
    /// replayed; the audit log sits next to it.
    pub fn open(items: Vec<EvalItem>, ratings_path: &Path, audit_path: &Path) -> Result<Self, StoreError> {
        let store = Self::build(items, BTreeMap::new(), None, None);
        let mut map = BTreeMap::new();
        if ratings_path.exists() {
            for (line, rating) in jsonl::read_with_lines::<RatingRecord>(ratings_path)? {
                store
                    .validate(&rating)
                    .map_err(|source| StoreError::InvalidStored {
                        path: ratings_path.to_path_buf(),
                        line,
                        source,
                    })?;
                map.insert(key(&rating), rating);
            }
        }
        let ratings = open_append(ratings_path)?;
        let audit = open_append(audit_path)?;
        Ok(Self::build(
            store.items,
            map,
            Some((ratings_path.to_path_buf(), ratings)),
            Some((audit_path.to_path_buf(), audit)),
        ))
    }

    fn build(
        items: Vec<EvalItem>,
        map: BTreeMap<Key, RatingRecord>,
        ratings: Option<(PathBuf, File)>,
        audit: Option<(PathBuf, File)>,
    ) -> Self {
        let index = items
            .iter()
            .enumerate()
            .map(|(i, item)| (item.item_id.clone(), i))
            .collect();
        Self {
            items,
            index,
            current: RwLock::new(Arc::new(map)),
            writer: Mutex::new(Writer { ratings, audit }),
        }
    }

    pub fn items(&self) -> &[EvalItem] {
        &self.items
    }

    pub fn item(&self, item_id: &str) -> Option<&EvalItem> {
        self.index.get(item_id).map(|&i| &self.items[i])
    }

    pub fn validate(&self, rating: &RatingRecord) -> Result<(), RatingError> {
        let item = self
            .item(&rating.item_id)
            .ok_or_else(|| RatingError::UnknownItem(rating.item_id.clone()))?;
        if !item.assigned_evaluators.contains(&rating.evaluator_id) {
            return Err(RatingError::NotAssigned {
                item: rating.item_id.clone(),
                evaluator: rating.evaluator_id.clone(),
            });
        }
        if !rating.dimension.applies_to(item.method) {
            return Err(RatingError::Inapplicable {
                dimension: rating.dimension,
                method: item.method.as_str(),
            });
        }
        if !(1..=5).contains(&rating.score) {
            return Err(RatingError::ScoreOutOfRange(rating.score));
        }
        Ok(())
    }

    pub fn submit(&self, rating: RatingRecord) -> Result<SubmitOutcome, StoreError> {
        self.validate(&rating)?;
        let mut writer = self.writer.lock().expect("rating writer poisoned");
        let k = key(&rating);
        let previous = self.snapshot().get(&k).map(|r| r.score);
        if let Some((path, file)) = writer.ratings.as_mut() {
            file.write_all(jsonl::to_line(&rating).as_bytes())
                .and_then(|_| file.flush())
                .map_err(|source| StoreError::Io {
                    path: path.clone(),
                    source,
                })?;
        }
        if let (Some(previous_score), Some((path, file))) = (previous, writer.audit.as_mut()) {
            let entry = AuditEntry {
                at: Utc::now(),
                event: "replace",
                item_id: &rating.item_id,
                evaluator_id: &rating.evaluator_id,
                dimension: rating.dimension,
                previous_score,
                score: rating.score,
            };
            file.write_all(jsonl::to_line(&entry).as_bytes())
                .and_then(|_| file.flush())
                .map_err(|source| StoreError::Io {
                    path: path.clone(),
                    source,
                })?;
        }
        let mut current = self.current.write().expect("rating map poisoned");
        let mut next = (**current).clone();
        next.insert(k, rating);
        *current = Arc::new(next);
        Ok(if previous.is_some() {
            SubmitOutcome::Replaced
        } else {
            SubmitOutcome::Created
        })
    }

    pub fn snapshot(&self) -> Arc<BTreeMap<Key, RatingRecord>> {
        Arc::clone(&self.current.read().expect("rating map poisoned"))
    }

    pub fn ratings(&self) -> Vec<RatingRecord> {
        self.snapshot().values().cloned().collect()
    }

    /// Scores this evaluator has given, per item and dimension.
    pub fn rated_by(&self, evaluator: &str) -> BTreeMap<String, BTreeMap<Dimension, i64>> {
        let mut out: BTreeMap<String, BTreeMap<Dimension, i64>> = BTreeMap::new();
        for ((item, ev, dim), r) in self.snapshot().iter() {
            if ev == evaluator {
                out.entry(item.clone()).or_default().insert(*dim, r.score);
            }
        }
        out
    }

    pub fn summary(&self) -> EvalSummary {
        aggregate(&self.items, &self.ratings())
    }
}

fn key(r: &RatingRecord) -> Key {
    (r.item_id.clone(), r.evaluator_id.clone(), r.dimension)
}
