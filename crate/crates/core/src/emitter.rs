//! Training-set assembly: union of narratives and rationales, seeded
//! subsets and mixtures, and the conversation-format training file.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracing::info;

use crate::hashing::{sha256_fields, sha256_hex};
use crate::jsonl::{self, JsonlError};
use crate::rng::{SeededRng, PRNG_ID};
use crate::synthgen::{NarrativeRecord, RationaleRecord};

/// Instruction paired with every target text. The question is deliberately
/// left out for rationales.
pub const INSTRUCTION: &str = "Describe the video.";
pub const VIDEO_TOKEN: &str = "<video>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Qbp,
    Qbc,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Qbp => "qbp",
            Origin::Qbc => "qbc",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub sample_id: String,
    pub video_uri: String,
    pub target_text: String,
    pub origin: Origin,
    pub dataset_id: String,
    pub source_ids: Vec<String>,
}

impl TrainingSample {
    pub fn new(
        dataset_id: &str,
        video_uri: &str,
        origin: Origin,
        target_text: &str,
        source_ids: Vec<String>,
    ) -> Self {
        Self {
            sample_id: sample_id(dataset_id, video_uri, origin, target_text),
            video_uri: video_uri.to_string(),
            target_text: target_text.to_string(),
            origin,
            dataset_id: dataset_id.to_string(),
            source_ids,
        }
    }
}

/// Content hash over (dataset, video, origin, target text).
pub fn sample_id(dataset_id: &str, video_uri: &str, origin: Origin, target_text: &str) -> String {
    sha256_fields([
        dataset_id.as_bytes(),
        video_uri.as_bytes(),
        origin.as_str().as_bytes(),
        target_text.as_bytes(),
    ])
}

#[derive(Debug, thiserror::Error)]
pub enum EmitError {
    #[error("subset size {size} exceeds {available} samples")]
    SubsetTooLarge { size: usize, available: usize },
    #[error("recipe names unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("recipe lists dataset {0:?} twice")]
    RepeatedDataset(String),
    #[error("sample {0} has empty target text")]
    EmptyTarget(String),
    #[error(transparent)]
    Io(#[from] JsonlError),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assembly {
    pub samples: Vec<TrainingSample>,
    /// Sample ids dropped as exact duplicates of an earlier sample.
    pub duplicates: Vec<String>,
}

/// Narratives first, then rationales, each in input order. Exact duplicates
/// (same sample id) keep their first occurrence.
pub fn assemble(narratives: &[NarrativeRecord], rationales: &[RationaleRecord]) -> Assembly {
    let candidates = narratives
        .iter()
        .map(|n| {
            TrainingSample::new(&n.dataset_id, &n.video_uri, Origin::Qbp, &n.text, n.source_qids.clone())
        })
        .chain(rationales.iter().map(|r| {
            TrainingSample::new(&r.dataset_id, &r.video_uri, Origin::Qbc, &r.text, vec![r.qid.clone()])
        }));
    let mut seen = HashSet::new();
    let mut out = Assembly::default();
    for sample in candidates {
        if seen.insert(sample.sample_id.clone()) {
            out.samples.push(sample);
        } else {
            info!(sample_id = %sample.sample_id, video = %sample.video_uri, "dropping duplicate sample");
            out.duplicates.push(sample.sample_id);
        }
    }
    out
}

/// Uniform sample of `size` elements without replacement. Selected samples
/// keep their input order, so a full-size subset is the input itself.
pub fn subset(
    samples: &[TrainingSample],
    size: usize,
    seed: u64,
) -> Result<Vec<TrainingSample>, EmitError> {
    if size > samples.len() {
        return Err(EmitError::SubsetTooLarge {
            size,
            available: samples.len(),
        });
    }
    let indices = SeededRng::new(seed).sample_indices(samples.len(), size);
    Ok(indices.into_iter().map(|i| samples[i].clone()).collect())
}

/// Concatenates the recipe's sources in order, then shuffles with `seed`.
pub fn mix(
    sources: &BTreeMap<String, Vec<TrainingSample>>,
    recipe: &[String],
    seed: u64,
) -> Result<Vec<TrainingSample>, EmitError> {
    let mut used = HashSet::new();
    let mut out = Vec::new();
    for name in recipe {
        if !used.insert(name) {
            return Err(EmitError::RepeatedDataset(name.clone()));
        }
        let part = sources
            .get(name)
            .ok_or_else(|| EmitError::UnknownDataset(name.clone()))?;
        out.extend(part.iter().cloned());
    }
    SeededRng::new(seed).shuffle(&mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: String,
    pub content: String,
}

/// One line of the training file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingLine {
    pub id: String,
    pub video: String,
    pub conversations: Vec<Turn>,
    pub origin: Origin,
    pub dataset: String,
}

impl From<&TrainingSample> for TrainingLine {
    fn from(s: &TrainingSample) -> Self {
        Self {
            id: s.sample_id.clone(),
            video: s.video_uri.clone(),
            conversations: vec![
                Turn {
                    role: "user".into(),
                    content: format!("{VIDEO_TOKEN}\n{INSTRUCTION}"),
                },
                Turn {
                    role: "assistant".into(),
                    content: s.target_text.clone(),
                },
            ],
            origin: s.origin,
            dataset: s.dataset_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub file: String,
    pub count: usize,
    pub origins: BTreeMap<Origin, usize>,
    pub datasets: BTreeMap<String, usize>,
    pub seeds: BTreeMap<String, u64>,
    pub prng: String,
    pub sha256: String,
}

/// `train.jsonl` → `train.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.manifest.json"))
}

/// Writes the training file and returns its manifest. The manifest holds no
/// timestamps, so identical inputs give identical bytes.
pub fn write_training_file(
    samples: &[TrainingSample],
    path: &Path,
    seeds: &BTreeMap<String, u64>,
) -> Result<TrainingManifest, EmitError> {
    let mut body = String::new();
    let mut manifest = TrainingManifest {
        file: path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        seeds: seeds.clone(),
        prng: PRNG_ID.to_string(),
        ..TrainingManifest::default()
    };
    for sample in samples {
        if sample.target_text.trim().is_empty() {
            return Err(EmitError::EmptyTarget(sample.sample_id.clone()));
        }
        body.push_str(&jsonl::to_line(&TrainingLine::from(sample)));
        *manifest.origins.entry(sample.origin).or_default() += 1;
        *manifest.datasets.entry(sample.dataset_id.clone()).or_default() += 1;
    }
    manifest.count = samples.len();
    manifest.sha256 = sha256_hex(body.as_bytes());
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| JsonlError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, body).map_err(|source| JsonlError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_id_covers_every_field() {
        let base = sample_id("D", "v", Origin::Qbp, "t");
        assert_ne!(base, sample_id("E", "v", Origin::Qbp, "t"));
        assert_ne!(base, sample_id("D", "w", Origin::Qbp, "t"));
        assert_ne!(base, sample_id("D", "v", Origin::Qbc, "t"));
        assert_ne!(base, sample_id("D", "v", Origin::Qbp, "u"));
        // Field separators keep shifted boundaries apart.
        assert_ne!(sample_id("Dv", "", Origin::Qbp, "t"), sample_id("D", "v", Origin::Qbp, "t"));
    }

    #[test]
    fn manifest_path_sits_next_to_file() {
        assert_eq!(
            manifest_path(Path::new("out/train.jsonl")),
            PathBuf::from("out/train.manifest.json")
        );
    }
}
