//! Automated checks over synthesized narratives and rationales, and the
//! report-driven filter applied before emission.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::QuestionGroup;
use crate::promptkit::PromptKind;
use crate::synthgen::{NarrativeRecord, RationaleRecord};
use crate::text::{
    contains_run, is_stopword, jaccard, lcs_len, match_tokens, normalize_for_match, sentences,
    stem, word_count,
};

pub const SPECULATIVE_TERMS: &str = "speculative_terms";
pub const FILLER_PHRASE: &str = "filler_phrase";
pub const ANSWER_COVERAGE: &str = "answer_coverage";
pub const LENGTH_BOUNDS: &str = "length_bounds";
pub const DUPLICATE_SENTENCE: &str = "duplicate_sentence";
pub const ANSWER_RESTATEMENT: &str = "answer_restatement";
pub const QUESTION_ECHO: &str = "question_echo";
pub const NONEMPTY: &str = "nonempty";

pub const QBP_CHECKS: [&str; 5] = [
    SPECULATIVE_TERMS,
    FILLER_PHRASE,
    ANSWER_COVERAGE,
    LENGTH_BOUNDS,
    DUPLICATE_SENTENCE,
];
pub const QBC_CHECKS: [&str; 4] = [ANSWER_RESTATEMENT, QUESTION_ECHO, LENGTH_BOUNDS, NONEMPTY];

/// Ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Warn => "warn",
            CheckStatus::Fail => "fail",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QcReport {
    pub record_id: String,
    pub kind: PromptKind,
    pub checks: Vec<CheckResult>,
    pub overall: CheckStatus,
}

impl QcReport {
    fn new(record_id: String, kind: PromptKind, checks: Vec<CheckResult>) -> Self {
        let overall = checks
            .iter()
            .map(|c| c.status)
            .max()
            .unwrap_or(CheckStatus::Pass);
        Self {
            record_id,
            kind,
            checks,
            overall,
        }
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Checks that did not pass.
    pub fn flags(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| c.status != CheckStatus::Pass)
    }
}

/// Thresholds for every check. Defaults are calibration choices, not values
/// taken from measured data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QcConfig {
    pub speculative_terms: Vec<String>,
    pub filler_phrases: Vec<String>,
    pub min_answer_coverage: f64,
    pub duplicate_jaccard: f64,
    pub qbp_word_bounds: (usize, usize),
    pub qbc_word_bounds: (usize, usize),
    pub min_added_content_words: usize,
    pub question_echo_fraction: f64,
}

impl Default for QcConfig {
    fn default() -> Self {
        Self {
            speculative_terms: ["probably", "might", "seems"].map(String::from).to_vec(),
            filler_phrases: vec!["the questions ask about".to_string()],
            min_answer_coverage: 0.8,
            duplicate_jaccard: 0.8,
            qbp_word_bounds: (15, 400),
            qbc_word_bounds: (10, 500),
            min_added_content_words: 8,
            question_echo_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QcError {
    #[error("record {record} checked against group {group}")]
    GroupMismatch { record: String, group: String },
    #[error("no question group for narrative {0}")]
    MissingGroup(String),
    #[error("no QC report for record {0}")]
    MissingReport(String),
}

/// Stable identifier shared by a record and its report.
pub trait QcRecord {
    fn record_id(&self) -> String;
}

impl QcRecord for NarrativeRecord {
    fn record_id(&self) -> String {
        format!("{}/{}", self.dataset_id, self.video_id)
    }
}

impl QcRecord for RationaleRecord {
    fn record_id(&self) -> String {
        format!("{}/{}/{}", self.dataset_id, self.video_id, self.qid)
    }
}

fn result(name: &str, status: CheckStatus, detail: impl Into<String>) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        status,
        detail: detail.into(),
    }
}

fn length_check(words: usize, (lo, hi): (usize, usize)) -> CheckResult {
    let status = if words < lo || words > hi {
        CheckStatus::Warn
    } else {
        CheckStatus::Pass
    };
    result(LENGTH_BOUNDS, status, format!("{words} words, bounds [{lo}, {hi}]"))
}

fn stemmed(tokens: &[String]) -> Vec<&str> {
    tokens.iter().map(|t| stem(t)).collect()
}

pub fn check_qbp(
    record: &NarrativeRecord,
    group: &QuestionGroup,
    config: &QcConfig,
) -> Result<QcReport, QcError> {
    if record.dataset_id != group.dataset_id || record.video_id != group.video_id {
        return Err(QcError::GroupMismatch {
            record: record.record_id(),
            group: format!("{}/{}", group.dataset_id, group.video_id),
        });
    }
    let tokens = match_tokens(&record.text);
    let normalized = normalize_for_match(&record.text);
    let mut checks = Vec::with_capacity(QBP_CHECKS.len());

    let found: Vec<&str> = config
        .speculative_terms
        .iter()
        .filter(|term| {
            let term_tokens = match_tokens(term);
            !term_tokens.is_empty() && contains_run(&tokens, &term_tokens)
        })
        .map(String::as_str)
        .collect();
    checks.push(if found.is_empty() {
        result(SPECULATIVE_TERMS, CheckStatus::Pass, "")
    } else {
        result(SPECULATIVE_TERMS, CheckStatus::Fail, format!("found {}", found.join(", ")))
    });

    let padded = format!(" {normalized} ");
    let fillers: Vec<&str> = config
        .filler_phrases
        .iter()
        .filter(|p| {
            let p = normalize_for_match(p);
            !p.is_empty() && padded.contains(&format!(" {p} "))
        })
        .map(String::as_str)
        .collect();
    checks.push(if fillers.is_empty() {
        result(FILLER_PHRASE, CheckStatus::Pass, "")
    } else {
        result(FILLER_PHRASE, CheckStatus::Fail, format!("found {:?}", fillers.join("; ")))
    });

    let text_stems = stemmed(&tokens);
    let mut missing = Vec::new();
    for pair in &group.pairs {
        let answer_tokens = match_tokens(&pair.answer);
        if !contains_run(&text_stems, &stemmed(&answer_tokens)) {
            missing.push(pair.answer.as_str());
        }
    }
    let total = group.pairs.len();
    let coverage = if total == 0 {
        1.0
    } else {
        (total - missing.len()) as f64 / total as f64
    };
    checks.push(if coverage + 1e-12 < config.min_answer_coverage {
        result(
            ANSWER_COVERAGE,
            CheckStatus::Warn,
            format!("{coverage:.2} of answers found; missing {missing:?}"),
        )
    } else {
        result(ANSWER_COVERAGE, CheckStatus::Pass, format!("{coverage:.2} of answers found"))
    });

    checks.push(length_check(word_count(&record.text), config.qbp_word_bounds));

    let sents: Vec<Vec<String>> = sentences(&record.text)
        .into_iter()
        .map(match_tokens)
        .filter(|t| !t.is_empty())
        .collect();
    let mut duplicate = None;
    'outer: for i in 0..sents.len() {
        for j in i + 1..sents.len() {
            let sim = jaccard(&sents[i], &sents[j]);
            if sim >= config.duplicate_jaccard {
                duplicate = Some((i, j, sim));
                break 'outer;
            }
        }
    }
    checks.push(match duplicate {
        Some((i, j, sim)) => result(
            DUPLICATE_SENTENCE,
            CheckStatus::Warn,
            format!("sentences {} and {} overlap (jaccard {sim:.2})", i + 1, j + 1),
        ),
        None => result(DUPLICATE_SENTENCE, CheckStatus::Pass, ""),
    });

    Ok(QcReport::new(record.record_id(), PromptKind::Qbp, checks))
}

pub fn check_qbc(record: &RationaleRecord, config: &QcConfig) -> QcReport {
    let text_tokens = match_tokens(&record.text);
    let answer_tokens = match_tokens(&record.answer);
    let question_tokens = match_tokens(&record.question);
    let words = word_count(&record.text);
    let answer_words = word_count(&record.answer);
    let mut checks = Vec::with_capacity(QBC_CHECKS.len());

    let restatement = if normalize_for_match(&record.text) == normalize_for_match(&record.answer) {
        result(ANSWER_RESTATEMENT, CheckStatus::Fail, "text equals the answer")
    } else if words <= answer_words + 2 {
        result(
            ANSWER_RESTATEMENT,
            CheckStatus::Fail,
            format!("{words} words against a {answer_words}-word answer"),
        )
    } else if !answer_tokens.is_empty() && contains_run(&text_tokens, &answer_tokens) {
        let answer_set: std::collections::HashSet<&str> =
            answer_tokens.iter().map(String::as_str).collect();
        let added = text_tokens
            .iter()
            .filter(|t| !is_stopword(t) && !answer_set.contains(t.as_str()))
            .count();
        if added < config.min_added_content_words {
            result(
                ANSWER_RESTATEMENT,
                CheckStatus::Warn,
                format!("answer quoted with only {added} additional content words"),
            )
        } else {
            result(ANSWER_RESTATEMENT, CheckStatus::Pass, format!("{added} additional content words"))
        }
    } else {
        result(ANSWER_RESTATEMENT, CheckStatus::Pass, "")
    };
    checks.push(restatement);

    let echo = if question_tokens.is_empty() {
        0.0
    } else {
        lcs_len(&question_tokens, &text_tokens) as f64 / question_tokens.len() as f64
    };
    checks.push(if echo + 1e-12 >= config.question_echo_fraction {
        result(
            QUESTION_ECHO,
            CheckStatus::Warn,
            format!("{echo:.2} of question tokens repeated in order"),
        )
    } else {
        result(QUESTION_ECHO, CheckStatus::Pass, format!("{echo:.2}"))
    });

    checks.push(length_check(words, config.qbc_word_bounds));

    checks.push(if record.text.trim().is_empty() {
        result(NONEMPTY, CheckStatus::Fail, "text is empty")
    } else {
        result(NONEMPTY, CheckStatus::Pass, "")
    });

    QcReport::new(record.record_id(), PromptKind::Qbc, checks)
}

/// Checks every narrative against its source group, looked up by
/// (dataset, video).
pub fn check_narratives(
    records: &[NarrativeRecord],
    groups: &[QuestionGroup],
    config: &QcConfig,
) -> Result<Vec<QcReport>, QcError> {
    let index: HashMap<(&str, &str), &QuestionGroup> = groups
        .iter()
        .map(|g| ((g.dataset_id.as_str(), g.video_id.as_str()), g))
        .collect();
    records
        .iter()
        .map(|r| {
            let group = index
                .get(&(r.dataset_id.as_str(), r.video_id.as_str()))
                .ok_or_else(|| QcError::MissingGroup(r.record_id()))?;
            check_qbp(r, group, config)
        })
        .collect()
}

pub fn check_rationales(records: &[RationaleRecord], config: &QcConfig) -> Vec<QcReport> {
    records.iter().map(|r| check_qbc(r, config)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterPolicy {
    DropFail,
    DropFailAndWarn,
    KeepAll,
}

impl FilterPolicy {
    fn keeps(self, overall: CheckStatus) -> bool {
        match self {
            FilterPolicy::KeepAll => true,
            FilterPolicy::DropFail => overall != CheckStatus::Fail,
            FilterPolicy::DropFailAndWarn => overall == CheckStatus::Pass,
        }
    }
}

impl std::str::FromStr for FilterPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "drop_fail" | "drop-fail" => Ok(FilterPolicy::DropFail),
            "drop_fail_and_warn" | "drop-fail-and-warn" => Ok(FilterPolicy::DropFailAndWarn),
            "keep_all" | "keep-all" => Ok(FilterPolicy::KeepAll),
            other => Err(format!("unknown filter policy {other:?}")),
        }
    }
}

/// Counts per check name and status, plus the overall outcome.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QcSummary {
    pub records: usize,
    pub overall: BTreeMap<CheckStatus, usize>,
    pub checks: BTreeMap<String, BTreeMap<CheckStatus, usize>>,
}

pub fn summarize(reports: &[QcReport]) -> QcSummary {
    let mut summary = QcSummary {
        records: reports.len(),
        ..QcSummary::default()
    };
    for report in reports {
        *summary.overall.entry(report.overall).or_default() += 1;
        for check in &report.checks {
            *summary
                .checks
                .entry(check.name.clone())
                .or_default()
                .entry(check.status)
                .or_default() += 1;
        }
    }
    summary
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub policy: FilterPolicy,
    pub input: usize,
    pub kept: usize,
    pub dropped: usize,
    pub qc: QcSummary,
}

/// Keeps the records whose report passes `policy`, in input order.
pub fn filter<R: QcRecord + Clone>(
    records: &[R],
    reports: &[QcReport],
    policy: FilterPolicy,
) -> Result<(Vec<R>, FilterSummary), QcError> {
    let by_id: HashMap<&str, &QcReport> =
        reports.iter().map(|r| (r.record_id.as_str(), r)).collect();
    let mut kept = Vec::with_capacity(records.len());
    let mut used = Vec::with_capacity(records.len());
    for record in records {
        let id = record.record_id();
        let report = by_id.get(id.as_str()).ok_or(QcError::MissingReport(id))?;
        used.push((*report).clone());
        if policy.keeps(report.overall) {
            kept.push(record.clone());
        }
    }
    let summary = FilterSummary {
        policy,
        input: records.len(),
        kept: kept.len(),
        dropped: records.len() - kept.len(),
        qc: summarize(&used),
    };
    Ok((kept, summary))
}
