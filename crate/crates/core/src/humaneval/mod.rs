//! Human evaluation: item sampling, rating validation and storage, the
//! review HTTP API, and mean/std aggregation per (method, dimension).

mod aggregate;
mod server;
mod store;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::QuestionGroup;
use crate::hashing::sha256_fields;
use crate::promptkit::PromptKind;
use crate::rng::SeededRng;
use crate::synthgen::{plan_frames, NarrativeRecord, RationaleRecord, DEFAULT_SAMPLE_COUNT, DEFAULT_TOTAL_FRAMES};

pub use aggregate::{
    aggregate, cell_moments, CellKey, EvalSummary, Moments, RejectedRating, SummaryCell, STD_KIND,
};
pub use server::{issue_tokens, router, serve, ReviewState, RUBRIC};
pub use store::{RatingError, RatingStore, StoreError, SubmitOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dimension {
    FactualConsistency,
    LogicalCoherence,
    VisualGrounding,
    Fluency,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::FactualConsistency,
        Dimension::LogicalCoherence,
        Dimension::VisualGrounding,
        Dimension::Fluency,
    ];

    /// Logical coherence is rated on narratives only, visual grounding on
    /// rationales only.
    pub fn applies_to(self, method: PromptKind) -> bool {
        match self {
            Dimension::FactualConsistency | Dimension::Fluency => true,
            Dimension::LogicalCoherence => method == PromptKind::Qbp,
            Dimension::VisualGrounding => method == PromptKind::Qbc,
        }
    }

    pub fn for_method(method: PromptKind) -> Vec<Dimension> {
        Self::ALL.into_iter().filter(|d| d.applies_to(method)).collect()
    }

    pub fn label(self) -> &'static str {
        match self {
            Dimension::FactualConsistency => "Factual Consistency",
            Dimension::LogicalCoherence => "Logical Coherence",
            Dimension::VisualGrounding => "Visual Grounding",
            Dimension::Fluency => "Fluency",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// What a rater sees next to the text: the source group for a narrative,
/// the pair plus frame thumbnails for a rationale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalContext {
    Group(QuestionGroup),
    Pair {
        question: String,
        answer: String,
        video_uri: String,
        frame_thumbnails: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub item_id: String,
    pub method: PromptKind,
    pub text: String,
    pub context: EvalContext,
    pub assigned_evaluators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub item_id: String,
    pub evaluator_id: String,
    pub dimension: Dimension,
    pub score: i64,
    #[serde(default = "Utc::now")]
    pub submitted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    pub n_per_method: usize,
    pub seed: u64,
    pub evaluators: Vec<String>,
    pub raters_per_item: usize,
    pub sample_count: u32,
    pub default_total_frames: u32,
    pub frame_counts: BTreeMap<String, u32>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n_per_method: 100,
            seed: 0,
            evaluators: ["rater-1", "rater-2", "rater-3"].map(String::from).to_vec(),
            raters_per_item: 3,
            sample_count: DEFAULT_SAMPLE_COUNT,
            default_total_frames: DEFAULT_TOTAL_FRAMES,
            frame_counts: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SamplingError {
    #[error("requested {requested} {method} items but the pool has {available}")]
    PoolTooSmall {
        method: &'static str,
        requested: usize,
        available: usize,
    },
    #[error("need {needed} evaluators per item, {available} configured")]
    TooFewEvaluators { needed: usize, available: usize },
    #[error("no question group for narrative {0}")]
    MissingGroup(String),
    #[error("invalid frame plan for {0}")]
    FramePlan(String),
}

pub fn qbp_item_id(dataset_id: &str, video_id: &str) -> String {
    format!("qbp:{dataset_id}/{video_id}")
}

pub fn qbc_item_id(dataset_id: &str, video_id: &str, qid: &str) -> String {
    format!("qbc:{dataset_id}/{video_id}/{qid}")
}

/// Thumbnail URI for one frame of a video.
pub fn thumbnail_uri(video_uri: &str, frame: u32) -> String {
    format!("{video_uri}#frame={frame}")
}

/// Draws `n_per_method` narratives and rationales uniformly without
/// replacement. Narratives come first, then rationales, each in pool order.
pub fn sample_items(
    narratives: &[NarrativeRecord],
    rationales: &[RationaleRecord],
    groups: &[QuestionGroup],
    config: &SamplingConfig,
) -> Result<Vec<EvalItem>, SamplingError> {
    let n = config.n_per_method;
    for (method, available) in [("QBP", narratives.len()), ("QBC", rationales.len())] {
        if available < n {
            return Err(SamplingError::PoolTooSmall {
                method,
                requested: n,
                available,
            });
        }
    }
    if config.raters_per_item == 0 || config.evaluators.len() < config.raters_per_item {
        return Err(SamplingError::TooFewEvaluators {
            needed: config.raters_per_item.max(1),
            available: config.evaluators.len(),
        });
    }
    let group_index: HashMap<(&str, &str), &QuestionGroup> = groups
        .iter()
        .map(|g| ((g.dataset_id.as_str(), g.video_id.as_str()), g))
        .collect();

    let mut rng = SeededRng::new(config.seed);
    let qbp = rng.sample_indices(narratives.len(), n);
    let qbc = rng.sample_indices(rationales.len(), n);
    let mut items = Vec::with_capacity(2 * n);
    for i in qbp {
        let r = &narratives[i];
        let group = group_index
            .get(&(r.dataset_id.as_str(), r.video_id.as_str()))
            .ok_or_else(|| SamplingError::MissingGroup(format!("{}/{}", r.dataset_id, r.video_id)))?;
        items.push(EvalItem {
            item_id: qbp_item_id(&r.dataset_id, &r.video_id),
            method: PromptKind::Qbp,
            text: r.text.clone(),
            context: EvalContext::Group((*group).clone()),
            assigned_evaluators: Vec::new(),
        });
    }
    for i in qbc {
        let r = &rationales[i];
        let total = config
            .frame_counts
            .get(&r.video_id)
            .copied()
            .unwrap_or(config.default_total_frames);
        let plan = plan_frames(&r.video_id, total, config.sample_count)
            .map_err(|_| SamplingError::FramePlan(r.video_id.clone()))?;
        items.push(EvalItem {
            item_id: qbc_item_id(&r.dataset_id, &r.video_id, &r.qid),
            method: PromptKind::Qbc,
            text: r.text.clone(),
            context: EvalContext::Pair {
                question: r.question.clone(),
                answer: r.answer.clone(),
                video_uri: r.video_uri.clone(),
                frame_thumbnails: plan
                    .thumbnail_indices()
                    .into_iter()
                    .map(|f| thumbnail_uri(&r.video_uri, f))
                    .collect(),
            },
            assigned_evaluators: Vec::new(),
        });
    }
    // Rotating assignment: item i goes to raters i, i+1, ... (mod E), which
    // spreads load evenly and gives every rater every item when E = r.
    let e = config.evaluators.len();
    for (i, item) in items.iter_mut().enumerate() {
        item.assigned_evaluators = (0..config.raters_per_item)
            .map(|j| config.evaluators[(i + j) % e].clone())
            .collect();
        item.assigned_evaluators.sort();
    }
    Ok(items)
}

/// The evaluator's items in a per-rater seeded order.
pub fn presentation_order<'a>(items: &'a [EvalItem], evaluator: &str, seed: u64) -> Vec<&'a EvalItem> {
    let mut mine: Vec<&EvalItem> = items
        .iter()
        .filter(|i| i.assigned_evaluators.iter().any(|e| e == evaluator))
        .collect();
    let digest = sha256_fields([seed.to_string().as_bytes(), evaluator.as_bytes()]);
    let rater_seed = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
    SeededRng::new(rater_seed).shuffle(&mut mine);
    mine
}
