//! Content-addressed response cache. A key covers every input that can
//! change the generated text, and nothing else.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::backend::GenerationRequest;
use crate::hashing::sha256_fields;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub text: String,
    pub model_id: String,
    /// When the response was first generated.
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: corrupt cache entry: {message}")]
    Corrupt { path: PathBuf, message: String },
}

/// Hash of `(model_id, prompt_hash, video_uri, frame indices, temperature)`.
/// The video URI is part of the frame reference: equal indices into
/// different videos are different inputs.
pub fn cache_key(request: &GenerationRequest) -> String {
    let frames = request
        .frame_plan
        .as_ref()
        .map(|p| {
            p.indices
                .iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join(",")
        })
        .unwrap_or_default();
    let temperature = format!("{:016x}", request.temperature.to_bits());
    sha256_fields([
        request.model_id.as_bytes(),
        request.prompt.prompt_hash.as_bytes(),
        request.video_uri.as_deref().unwrap_or("").as_bytes(),
        frames.as_bytes(),
        temperature.as_bytes(),
    ])
}

pub trait ResponseCache: Send + Sync {
    fn get(&self, key: &str) -> Result<Option<CacheEntry>, CacheError>;
    fn put(&self, key: &str, entry: &CacheEntry) -> Result<(), CacheError>;
}

#[derive(Debug, Default)]
pub struct MemoryCache {
    entries: Mutex<HashMap<String, CacheEntry>>,
}

impl MemoryCache {
    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ResponseCache for MemoryCache {
    fn get(&self, key: &str) -> Result<Option<CacheEntry>, CacheError> {
        Ok(self.entries.lock().expect("cache poisoned").get(key).cloned())
    }

    fn put(&self, key: &str, entry: &CacheEntry) -> Result<(), CacheError> {
        self.entries
            .lock()
            .expect("cache poisoned")
            .insert(key.to_string(), entry.clone());
        Ok(())
    }
}

/// One JSON file per entry under `root/<first two hex chars>/<key>.json`.
/// Writes go through a temp file and a rename.
#[derive(Debug, Clone)]
pub struct DiskCache {
    root: PathBuf,
}

impl DiskCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path_for(&self, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or("__");
        self.root.join(shard).join(format!("{key}.json"))
    }
}

impl ResponseCache for DiskCache {
    fn get(&self, key: &str) -> Result<Option<CacheEntry>, CacheError> {
        let path = self.path_for(key);
        let body = match std::fs::read_to_string(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(CacheError::Io { path, source }),
        };
        serde_json::from_str(&body)
            .map(Some)
            .map_err(|e| CacheError::Corrupt {
                path,
                message: e.to_string(),
            })
    }

    fn put(&self, key: &str, entry: &CacheEntry) -> Result<(), CacheError> {
        let path = self.path_for(key);
        let io_err = |source| CacheError::Io {
            path: path.clone(),
            source,
        };
        let dir = path.parent().expect("cache paths have a shard directory");
        std::fs::create_dir_all(dir).map_err(io_err)?;
        let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
        let body = serde_json::to_string(entry).expect("cache entries serialize");
        std::fs::write(&tmp, body).map_err(io_err)?;
        std::fs::rename(&tmp, &path).map_err(io_err)
    }
}
