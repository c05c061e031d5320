use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Dimension, EvalItem, RatingRecord};
use crate::promptkit::PromptKind;

/// The standard deviation reported in every cell.
pub const STD_KIND: &str = "population";

pub type CellKey = (PromptKind, Dimension);

/// Count, sum and sum of squares of integer scores. Integer sums make shard
/// merging exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub sum: i64,
    pub sum_sq: i64,
}

impl Moments {
    pub fn add(&mut self, score: i64) {
        self.n += 1;
        self.sum += score;
        self.sum_sq += score * score;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum as f64 / self.n as f64)
    }

    /// Population standard deviation.
    pub fn std(&self) -> Option<f64> {
        let n = self.n as f64;
        (self.n > 0).then(|| {
            let var = (self.sum_sq as f64 * n - (self.sum as f64).powi(2)) / (n * n);
            var.max(0.0).sqrt()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub method: PromptKind,
    pub dimension: Dimension,
    pub mean: f64,
    pub std: f64,
    pub n_ratings: u64,
    pub expected: u64,
    pub completion: f64,
    /// Mean absolute score difference over all rater pairs on the same item.
    pub agreement_mad: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRating {
    pub item_id: String,
    pub evaluator_id: String,
    pub dimension: Dimension,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub std_kind: String,
    pub cells: Vec<SummaryCell>,
    pub rejected: Vec<RejectedRating>,
}

impl EvalSummary {
    pub fn cell(&self, method: PromptKind, dimension: Dimension) -> Option<&SummaryCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.dimension == dimension)
    }

    /// One line per cell: `QBP  Factual Consistency  4.21 ± 0.55  (n=300, 100.0%)`.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for c in &self.cells {
            out.push_str(&format!(
                "{}\t{}\t{:.2} ± {:.2}\t(n={}, {:.1}%)\n",
                c.method.as_str(),
                c.dimension.label(),
                c.mean,
                c.std,
                c.n_ratings,
                c.completion * 100.0
            ));
        }
        out
    }
}

type RatingKey<'a> = (&'a str, &'a str, Dimension);

/// Validates ratings against the items and keeps the last rating per
/// (item, evaluator, dimension).
fn accepted<'a>(
    items: &HashMap<&'a str, &'a EvalItem>,
    ratings: &'a [RatingRecord],
    rejected: &mut Vec<RejectedRating>,
) -> BTreeMap<RatingKey<'a>, (PromptKind, i64)> {
    let mut latest = BTreeMap::new();
    for r in ratings {
        let reason = match items.get(r.item_id.as_str()) {
            None => Some("unknown item".to_string()),
            Some(item) if !r.dimension.applies_to(item.method) => Some(format!(
                "{} does not apply to {} items",
                r.dimension.label(),
                item.method.as_str()
            )),
            Some(_) if !(1..=5).contains(&r.score) => Some(format!("score {} outside 1..5", r.score)),
            Some(item) if !item.assigned_evaluators.contains(&r.evaluator_id) => {
                Some("evaluator not assigned to item".to_string())
            }
            Some(item) => {
                latest.insert(
                    (r.item_id.as_str(), r.evaluator_id.as_str(), r.dimension),
                    (item.method, r.score),
                );
                None
            }
        };
        if let Some(reason) = reason {
            rejected.push(RejectedRating {
                item_id: r.item_id.clone(),
                evaluator_id: r.evaluator_id.clone(),
                dimension: r.dimension,
                reason,
            });
        }
    }
    latest
}

fn index(items: &[EvalItem]) -> HashMap<&str, &EvalItem> {
    items.iter().map(|i| (i.item_id.as_str(), i)).collect()
}

/// Per-cell moments of the valid ratings. Merging the moments of disjoint
/// shards gives the moments of their union.
pub fn cell_moments(items: &[EvalItem], ratings: &[RatingRecord]) -> BTreeMap<CellKey, Moments> {
    let mut rejected = Vec::new();
    let mut cells: BTreeMap<CellKey, Moments> = BTreeMap::new();
    for ((_, _, dim), (method, score)) in accepted(&index(items), ratings, &mut rejected) {
        cells.entry((method, dim)).or_default().add(score);
    }
    cells
}

pub fn aggregate(items: &[EvalItem], ratings: &[RatingRecord]) -> EvalSummary {
    let item_index = index(items);
    let mut rejected = Vec::new();
    let latest = accepted(&item_index, ratings, &mut rejected);

    let mut moments: BTreeMap<CellKey, Moments> = BTreeMap::new();
    let mut per_item: BTreeMap<(&str, Dimension), Vec<i64>> = BTreeMap::new();
    for ((item, _, dim), (method, score)) in &latest {
        moments.entry((*method, *dim)).or_default().add(*score);
        per_item.entry((item, *dim)).or_default().push(*score);
    }

    let mut expected: BTreeMap<CellKey, u64> = BTreeMap::new();
    for item in items {
        for dim in Dimension::for_method(item.method) {
            *expected.entry((item.method, dim)).or_default() += item.assigned_evaluators.len() as u64;
        }
    }

    let mut pair_diffs: BTreeMap<CellKey, (f64, u64)> = BTreeMap::new();
    for ((item, dim), scores) in &per_item {
        let method = item_index[item].method;
        let acc = pair_diffs.entry((method, *dim)).or_default();
        for i in 0..scores.len() {
            for j in i + 1..scores.len() {
                acc.0 += (scores[i] - scores[j]).abs() as f64;
                acc.1 += 1;
            }
        }
    }

    let cells = moments
        .iter()
        .map(|(&(method, dimension), m)| {
            let expected = expected.get(&(method, dimension)).copied().unwrap_or(0);
            SummaryCell {
                method,
                dimension,
                mean: m.mean().expect("non-empty cell"),
                std: m.std().expect("non-empty cell"),
                n_ratings: m.n,
                expected,
                completion: if expected == 0 { 0.0 } else { m.n as f64 / expected as f64 },
                agreement_mad: pair_diffs
                    .get(&(method, dimension))
                    .filter(|(_, pairs)| *pairs > 0)
                    .map(|(sum, pairs)| sum / *pairs as f64),
            }
        })
        .collect();
    EvalSummary {
        std_kind: STD_KIND.to_string(),
        cells,
        rejected,
    }
}
