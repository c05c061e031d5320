use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::normalize::{normalize_answer, NORMALIZATION_RULES};

/// One model prediction paired with its gold answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub dataset_id: String,
    pub video_id: String,
    pub qid: String,
    pub predicted: String,
    pub gold: String,
    #[serde(default)]
    pub options: Option<Vec<String>>,
    #[serde(default)]
    pub gold_index: Option<usize>,
    /// Carried through from the corpus for per-type breakdowns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_type: Option<String>,
}

impl PredictionRecord {
    fn has_options(&self) -> bool {
        self.options.as_ref().is_some_and(|o| !o.is_empty())
    }

    fn gold_option_index(&self) -> Option<usize> {
        if self.gold_index.is_some() {
            return self.gold_index;
        }
        let gold = normalize_answer(&self.gold, true);
        self.options
            .as_ref()?
            .iter()
            .position(|o| normalize_answer(o, true) == gold)
    }
}

/// How a multiple-choice prediction was mapped to an option.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionResolution {
    OptionText,
    OptionLetter,
    Substring,
}

/// Maps a free-text prediction onto an option index. The cascade is: exact
/// option text, then option letter, then containment of exactly one option.
pub fn resolve_option(predicted: &str, options: &[String]) -> Option<(usize, OptionResolution)> {
    let pred = normalize_answer(predicted, true);
    let normalized: Vec<String> = options.iter().map(|o| normalize_answer(o, true)).collect();

    if let Some(i) = normalized.iter().position(|o| *o == pred) {
        return Some((i, OptionResolution::OptionText));
    }
    if let Some(i) = option_letter(&normalize_answer(predicted, false)) {
        if i < options.len() {
            return Some((i, OptionResolution::OptionLetter));
        }
    }
    let mut contained = normalized
        .iter()
        .enumerate()
        .filter(|(_, o)| !o.is_empty() && pred.contains(o.as_str()));
    match (contained.next(), contained.next()) {
        (Some((i, _)), None) => Some((i, OptionResolution::Substring)),
        _ => None,
    }
}

/// Reads an option letter from `a`, `(a)`, `a)`, `a:` or a string starting
/// with such a marker followed by a space.
fn option_letter(s: &str) -> Option<usize> {
    let b = s.as_bytes();
    let letter = match b {
        [l] => *l,
        [b'(', l, b')', rest @ ..] if rest.is_empty() || rest[0] == b' ' => *l,
        [l, b'.' | b')' | b':', rest @ ..] if rest.is_empty() || rest[0] == b' ' => *l,
        _ => return None,
    };
    letter
        .is_ascii_lowercase()
        .then(|| (letter - b'a') as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Normalized string equality only.
    ExactString,
    /// String equality, or the resolved option index equals the gold index.
    ExactStringOrOptionIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TypeAccuracy {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Additive counts; shards can be tallied independently and merged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTally {
    pub n: usize,
    pub correct: usize,
    pub correct_by_string: usize,
    pub correct_by_option: usize,
    pub unresolved: usize,
    pub any_options: bool,
    pub per_type: BTreeMap<String, (usize, usize)>,
}

impl ScoreTally {
    pub fn add(&mut self, record: &PredictionRecord) {
        let has_options = record.has_options();
        self.any_options |= has_options;
        self.n += 1;

        let string_match = normalize_answer(&record.predicted, has_options)
            == normalize_answer(&record.gold, has_options);
        let mut option_match = false;
        if has_options && !string_match {
            let options = record.options.as_deref().unwrap_or_default();
            match resolve_option(&record.predicted, options) {
                Some((idx, _)) => option_match = record.gold_option_index() == Some(idx),
                None => {
                    self.unresolved += 1;
                    warn!(
                        dataset = %record.dataset_id,
                        video = %record.video_id,
                        qid = %record.qid,
                        "prediction did not resolve to any option"
                    );
                }
            }
        }

        let correct = string_match || option_match;
        if correct {
            self.correct += 1;
            if string_match {
                self.correct_by_string += 1;
            } else {
                self.correct_by_option += 1;
            }
        }
        if let Some(t) = &record.question_type {
            let entry = self.per_type.entry(t.clone()).or_default();
            entry.0 += 1;
            entry.1 += usize::from(correct);
        }
    }

    pub fn merge(mut self, other: ScoreTally) -> ScoreTally {
        self.n += other.n;
        self.correct += other.correct;
        self.correct_by_string += other.correct_by_string;
        self.correct_by_option += other.correct_by_option;
        self.unresolved += other.unresolved;
        self.any_options |= other.any_options;
        for (t, (n, c)) in other.per_type {
            let entry = self.per_type.entry(t).or_default();
            entry.0 += n;
            entry.1 += c;
        }
        self
    }

    pub fn into_report(self, train_source: &str, test_target: &str) -> AccuracyReport {
        AccuracyReport {
            train_source: train_source.to_string(),
            test_target: test_target.to_string(),
            n: self.n,
            correct: self.correct,
            accuracy: percent(self.correct, self.n),
            per_question_type: self
                .per_type
                .into_iter()
                .map(|(t, (n, correct))| {
                    (
                        t,
                        TypeAccuracy {
                            n,
                            correct,
                            accuracy: percent(correct, n),
                        },
                    )
                })
                .collect(),
            match_mode: if self.any_options {
                MatchMode::ExactStringOrOptionIndex
            } else {
                MatchMode::ExactString
            },
            correct_by_string: self.correct_by_string,
            correct_by_option: self.correct_by_option,
            unresolved: self.unresolved,
            normalization: NORMALIZATION_RULES.to_string(),
        }
    }
}

fn percent(correct: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * correct as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub train_source: String,
    pub test_target: String,
    pub n: usize,
    pub correct: usize,
    /// Percent in `[0, 100]`; zero when `n == 0`.
    pub accuracy: f64,
    pub per_question_type: BTreeMap<String, TypeAccuracy>,
    pub match_mode: MatchMode,
    pub correct_by_string: usize,
    pub correct_by_option: usize,
    pub unresolved: usize,
    pub normalization: String,
}

pub fn score(preds: &[PredictionRecord], train_source: &str, test_target: &str) -> AccuracyReport {
    let mut tally = ScoreTally::default();
    for p in preds {
        tally.add(p);
    }
    tally.into_report(train_source, test_target)
}
