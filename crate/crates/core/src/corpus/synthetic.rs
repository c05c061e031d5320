//! Synthetic corpora with exact video and QA counts, for benchmarks and
//! load tests of the pipeline stages.

use super::QaPair;
use crate::rng::SeededRng;

const SUBJECTS: &[&str] = &[
    "the man in red", "the girl", "the dog", "the person in blue", "the baby", "the woman",
    "the boy on the left", "the cat",
];
const QUESTIONS: &[(&str, &str)] = &[
    ("Why is {s} sitting down?", "resting"),
    ("What does {s} do after standing up?", "walks away"),
    ("How does {s} react to the camera?", "poses"),
    ("Where is {s}?", "on the snow"),
    ("What is {s} holding?", "a camera"),
    ("Why does {s} look back?", "to check on the others"),
    ("What happens before {s} jumps?", "runs forward"),
    ("How many people are near {s}?", "three"),
];

/// Requested size of a synthetic dataset.
#[derive(Debug, Clone)]
pub struct CorpusShape {
    pub dataset_id: String,
    pub videos: usize,
    pub qa_pairs: usize,
    pub seed: u64,
}

impl CorpusShape {
    pub fn new(dataset_id: impl Into<String>, videos: usize, qa_pairs: usize, seed: u64) -> Self {
        Self {
            dataset_id: dataset_id.into(),
            videos,
            qa_pairs,
            seed,
        }
    }
}

/// Generates exactly `shape.qa_pairs` pairs spread over exactly
/// `shape.videos` videos (every video gets at least one pair; the remainder
/// is assigned uniformly at random). Records are ordered by video.
///
/// Panics if `qa_pairs < videos`.
pub fn generate(shape: &CorpusShape) -> Vec<QaPair> {
    assert!(
        shape.qa_pairs >= shape.videos,
        "need at least one QA pair per video"
    );
    let mut rng = SeededRng::new(shape.seed);
    let mut sizes = vec![1usize; shape.videos];
    for _ in shape.videos..shape.qa_pairs {
        let v = rng.below(shape.videos as u64) as usize;
        sizes[v] += 1;
    }

    let slug: String = shape
        .dataset_id
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_lowercase();
    let mut out = Vec::with_capacity(shape.qa_pairs);
    for (v, &k) in sizes.iter().enumerate() {
        let video_id = format!("{slug}-{v:06}");
        let video_uri = format!("file://videos/{slug}/{video_id}.mp4");
        for q in 0..k {
            let subject = SUBJECTS[rng.below(SUBJECTS.len() as u64) as usize];
            let (template, answer) = QUESTIONS[rng.below(QUESTIONS.len() as u64) as usize];
            out.push(QaPair {
                dataset_id: shape.dataset_id.clone(),
                video_id: video_id.clone(),
                video_uri: video_uri.clone(),
                qid: format!("q{q}"),
                question: template.replace("{s}", subject),
                answer: answer.to_string(),
                question_type: None,
                options: None,
                answer_index: None,
            });
        }
    }
    out
}
