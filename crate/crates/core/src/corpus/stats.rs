use std::collections::BTreeMap;

use serde::ser::{Serialize, SerializeMap, Serializer};

use super::QuestionGroup;
use crate::text::word_count;

/// Largest exact bucket of the QA-per-video histogram; larger groups land in
/// the overflow bucket.
const MAX_EXACT_BUCKET: usize = 30;

pub const STATS_CSV_HEADER: &str = "dataset,videos,qa_pairs,mean_qa_per_video";

/// Histogram of group sizes with exact buckets `1..=30` and a `>30` overflow.
/// Empty buckets are kept so reports diff cleanly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaHistogram {
    exact: [usize; MAX_EXACT_BUCKET],
    overflow: usize,
}

impl Default for QaHistogram {
    fn default() -> Self {
        Self {
            exact: [0; MAX_EXACT_BUCKET],
            overflow: 0,
        }
    }
}

impl QaHistogram {
    fn add(&mut self, group_size: usize) {
        match group_size {
            0 => {}
            n if n <= MAX_EXACT_BUCKET => self.exact[n - 1] += 1,
            _ => self.overflow += 1,
        }
    }

    /// Count for an exact group size in `1..=30`.
    pub fn bucket(&self, group_size: usize) -> usize {
        self.exact[group_size - 1]
    }

    pub fn overflow(&self) -> usize {
        self.overflow
    }

    pub fn total(&self) -> usize {
        self.exact.iter().sum::<usize>() + self.overflow
    }
}

impl Serialize for QaHistogram {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(MAX_EXACT_BUCKET + 1))?;
        for (i, count) in self.exact.iter().enumerate() {
            map.serialize_entry(&(i + 1).to_string(), count)?;
        }
        map.serialize_entry(&format!(">{MAX_EXACT_BUCKET}"), &self.overflow)?;
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DatasetStats {
    pub dataset_id: String,
    pub video_count: usize,
    pub qa_count: usize,
    pub mean_qa_per_video: f64,
    pub qa_per_video_histogram: QaHistogram,
    /// Word-count histograms keyed by series name (`answers`, `questions`).
    pub length_histograms: BTreeMap<String, BTreeMap<usize, usize>>,
}

impl DatasetStats {
    fn empty(dataset_id: &str) -> Self {
        let mut length_histograms = BTreeMap::new();
        length_histograms.insert("answers".to_string(), BTreeMap::new());
        length_histograms.insert("questions".to_string(), BTreeMap::new());
        Self {
            dataset_id: dataset_id.to_string(),
            video_count: 0,
            qa_count: 0,
            mean_qa_per_video: 0.0,
            qa_per_video_histogram: QaHistogram::default(),
            length_histograms,
        }
    }

    /// Whitespace-separated table row: `dataset videos qa mean`.
    pub fn table_row(&self) -> String {
        format!(
            "{} {} {} {}",
            self.dataset_id,
            self.video_count,
            self.qa_count,
            format_mean(self.mean_qa_per_video)
        )
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.4}",
            self.dataset_id, self.video_count, self.qa_count, self.mean_qa_per_video
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default, serde::Serialize)]
pub struct CorpusStats {
    pub datasets: BTreeMap<String, DatasetStats>,
}

impl CorpusStats {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(STATS_CSV_HEADER);
        out.push('\n');
        for ds in self.datasets.values() {
            out.push_str(&ds.csv_row());
            out.push('\n');
        }
        out
    }
}

/// Two decimals with trailing zeros trimmed, keeping at least one decimal:
/// `15.0`, `8.95`, `3.5`.
pub fn format_mean(value: f64) -> String {
    let mut s = format!("{value:.2}");
    if s.ends_with('0') {
        s.pop();
    }
    s
}

pub fn compute_stats(groups: &[QuestionGroup]) -> CorpusStats {
    let mut datasets: BTreeMap<String, DatasetStats> = BTreeMap::new();
    for g in groups {
        let ds = datasets
            .entry(g.dataset_id.clone())
            .or_insert_with(|| DatasetStats::empty(&g.dataset_id));
        ds.video_count += 1;
        ds.qa_count += g.group_size;
        ds.qa_per_video_histogram.add(g.group_size);
        for pair in &g.pairs {
            *ds.length_histograms
                .get_mut("answers")
                .expect("series initialized")
                .entry(word_count(&pair.answer))
                .or_default() += 1;
            *ds.length_histograms
                .get_mut("questions")
                .expect("series initialized")
                .entry(word_count(&pair.question))
                .or_default() += 1;
        }
    }
    for ds in datasets.values_mut() {
        ds.mean_qa_per_video = if ds.video_count == 0 {
            0.0
        } else {
            ds.qa_count as f64 / ds.video_count as f64
        };
    }
    CorpusStats { datasets }
}
