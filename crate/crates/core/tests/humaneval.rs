use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use chrono::DateTime;
use proptest::prelude::*;
use serde_json::{json, Value};
use tower::ServiceExt;

use qasynth::corpus::{self, synthetic, QuestionGroup};
use qasynth::humaneval::{
    aggregate, cell_moments, presentation_order, router, sample_items, Dimension, EvalContext,
    EvalItem, Moments, RatingError, RatingRecord, RatingStore, ReviewState, SamplingConfig,
    SamplingError, StoreError, SubmitOutcome,
};
use qasynth::promptkit::PromptKind;
use qasynth::synthgen::{NarrativeRecord, RationaleRecord};

fn pools(videos: usize, pairs: usize) -> (Vec<QuestionGroup>, Vec<NarrativeRecord>, Vec<RationaleRecord>) {
    let pairs = synthetic::generate(&synthetic::CorpusShape::new("NExT-QA", videos, pairs, 3));
    let groups = corpus::group(&pairs).unwrap();
    let narratives = groups
        .iter()
        .map(|g| NarrativeRecord {
            dataset_id: g.dataset_id.clone(),
            video_id: g.video_id.clone(),
            video_uri: g.video_uri.clone(),
            text: format!("Narrative for {}.", g.video_id),
            source_qids: g.qids(),
            model_id: "m".into(),
            prompt_hash: "h".into(),
            created_at: DateTime::UNIX_EPOCH,
        })
        .collect();
    let rationales = pairs
        .iter()
        .map(|p| RationaleRecord {
            dataset_id: p.dataset_id.clone(),
            video_id: p.video_id.clone(),
            video_uri: p.video_uri.clone(),
            qid: p.qid.clone(),
            question: p.question.clone(),
            answer: p.answer.clone(),
            text: format!("Rationale for {}/{}.", p.video_id, p.qid),
            model_id: "m".into(),
            prompt_hash: "h".into(),
            created_at: DateTime::UNIX_EPOCH,
        })
        .collect();
    (groups, narratives, rationales)
}

fn items(n: usize, seed: u64) -> Vec<EvalItem> {
    let (groups, narratives, rationales) = pools(300, 1200);
    let cfg = SamplingConfig {
        n_per_method: n,
        seed,
        ..SamplingConfig::default()
    };
    sample_items(&narratives, &rationales, &groups, &cfg).unwrap()
}

fn rating(item: &str, evaluator: &str, dimension: Dimension, score: i64) -> RatingRecord {
    RatingRecord {
        item_id: item.into(),
        evaluator_id: evaluator.into(),
        dimension,
        score,
        submitted_at: DateTime::UNIX_EPOCH,
    }
}

fn first(items: &[EvalItem], method: PromptKind) -> String {
    items.iter().find(|i| i.method == method).unwrap().item_id.clone()
}

#[test]
fn samples_one_hundred_of_each_method() {
    let items = items(100, 9);
    assert_eq!(items.len(), 200);
    assert_eq!(items.iter().filter(|i| i.method == PromptKind::Qbp).count(), 100);
    let ids: HashSet<_> = items.iter().map(|i| &i.item_id).collect();
    assert_eq!(ids.len(), 200);
    for item in &items {
        assert_eq!(item.assigned_evaluators.len(), 3);
        match (&item.context, item.method) {
            (EvalContext::Group(g), PromptKind::Qbp) => assert!(!g.pairs.is_empty()),
            (EvalContext::Pair { frame_thumbnails, video_uri, .. }, PromptKind::Qbc) => {
                // 160 frames, 16 samples: plan positions 0, 5, 10, 15.
                let expected: Vec<String> = [0, 50, 100, 150]
                    .iter()
                    .map(|f| format!("{video_uri}#frame={f}"))
                    .collect();
                assert_eq!(frame_thumbnails, &expected);
            }
            _ => panic!("context does not match method"),
        }
    }
}

#[test]
fn sampling_is_seeded() {
    let ids = |items: Vec<EvalItem>| items.into_iter().map(|i| i.item_id).collect::<Vec<_>>();
    assert_eq!(ids(items(50, 1)), ids(items(50, 1)));
    assert_ne!(ids(items(50, 1)), ids(items(50, 2)));
    assert!(items(0, 1).is_empty());
}

#[test]
fn small_pool_is_an_error() {
    let (groups, narratives, rationales) = pools(10, 40);
    let cfg = SamplingConfig {
        n_per_method: 11,
        ..SamplingConfig::default()
    };
    assert!(matches!(
        sample_items(&narratives, &rationales, &groups, &cfg),
        Err(SamplingError::PoolTooSmall { method: "QBP", requested: 11, available: 10 })
    ));
}

#[test]
fn partial_assignment_balances_raters() {
    let (groups, narratives, rationales) = pools(50, 100);
    let cfg = SamplingConfig {
        n_per_method: 30,
        evaluators: (1..=6).map(|i| format!("r{i}")).collect(),
        raters_per_item: 2,
        ..SamplingConfig::default()
    };
    let items = sample_items(&narratives, &rationales, &groups, &cfg).unwrap();
    let mut load: HashMap<&str, usize> = HashMap::new();
    for item in &items {
        assert_eq!(item.assigned_evaluators.len(), 2);
        for e in &item.assigned_evaluators {
            *load.entry(e).or_default() += 1;
        }
    }
    assert!(load.values().all(|&n| n == 20), "{load:?}");
}

#[test]
fn presentation_order_is_a_per_rater_permutation() {
    let items = items(20, 4);
    let a: Vec<_> = presentation_order(&items, "rater-1", 7).iter().map(|i| &i.item_id).collect();
    let b: Vec<_> = presentation_order(&items, "rater-2", 7).iter().map(|i| &i.item_id).collect();
    assert_eq!(a.len(), 40);
    assert_ne!(a, b);
    let sa: HashSet<_> = a.iter().collect();
    let sb: HashSet<_> = b.iter().collect();
    assert_eq!(sa, sb);
    let again: Vec<_> = presentation_order(&items, "rater-1", 7).iter().map(|i| &i.item_id).collect();
    assert_eq!(a, again);
}

#[test]
fn submit_validates_and_replaces() {
    let items = items(5, 1);
    let qbp = first(&items, PromptKind::Qbp);
    let qbc = first(&items, PromptKind::Qbc);
    let store = RatingStore::in_memory(items);

    assert_eq!(
        store.submit(rating(&qbc, "rater-1", Dimension::VisualGrounding, 4)).unwrap(),
        SubmitOutcome::Created
    );
    let err = store
        .submit(rating(&qbp, "rater-1", Dimension::VisualGrounding, 4))
        .unwrap_err();
    assert!(matches!(err, StoreError::Rating(RatingError::Inapplicable { .. })));
    let err = store
        .submit(rating(&qbc, "rater-1", Dimension::LogicalCoherence, 4))
        .unwrap_err();
    assert!(matches!(err, StoreError::Rating(RatingError::Inapplicable { .. })));
    let err = store.submit(rating(&qbp, "rater-1", Dimension::Fluency, 6)).unwrap_err();
    assert!(matches!(err, StoreError::Rating(RatingError::ScoreOutOfRange(6))));
    let err = store.submit(rating(&qbp, "rater-9", Dimension::Fluency, 3)).unwrap_err();
    assert!(matches!(err, StoreError::Rating(RatingError::NotAssigned { .. })));
    let err = store.submit(rating("nope", "rater-1", Dimension::Fluency, 3)).unwrap_err();
    assert!(matches!(err, StoreError::Rating(RatingError::UnknownItem(_))));

    assert_eq!(
        store.submit(rating(&qbc, "rater-1", Dimension::VisualGrounding, 2)).unwrap(),
        SubmitOutcome::Replaced
    );
    let stored = store.ratings();
    assert_eq!(stored.len(), 1);
    assert_eq!(stored[0].score, 2);
}

#[test]
fn persistent_store_replays_and_audits() {
    let dir = tempfile::tempdir().unwrap();
    let ratings_path = dir.path().join("ratings.jsonl");
    let audit_path = dir.path().join("audit.jsonl");
    let items = items(5, 1);
    let qbp = first(&items, PromptKind::Qbp);
    {
        let store = RatingStore::open(items.clone(), &ratings_path, &audit_path).unwrap();
        store.submit(rating(&qbp, "rater-2", Dimension::Fluency, 5)).unwrap();
        store.submit(rating(&qbp, "rater-2", Dimension::Fluency, 3)).unwrap();
        store.submit(rating(&qbp, "rater-3", Dimension::Fluency, 4)).unwrap();
    }
    let lines = std::fs::read_to_string(&ratings_path).unwrap();
    assert_eq!(lines.lines().count(), 3, "append-only");
    let audit = std::fs::read_to_string(&audit_path).unwrap();
    assert_eq!(audit.lines().count(), 1);
    let entry: Value = serde_json::from_str(audit.lines().next().unwrap()).unwrap();
    assert_eq!(entry["previous_score"], 5);
    assert_eq!(entry["score"], 3);

    let store = RatingStore::open(items, &ratings_path, &audit_path).unwrap();
    let mut scores: Vec<_> = store.ratings().iter().map(|r| r.score).collect();
    scores.sort();
    assert_eq!(scores, vec![3, 4]);
}

#[test]
fn tampered_ratings_file_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let items = items(2, 1);
    let qbp = first(&items, PromptKind::Qbp);
    let path = dir.path().join("ratings.jsonl");
    let bad = rating(&qbp, "rater-1", Dimension::VisualGrounding, 5);
    std::fs::write(&path, serde_json::to_string(&bad).unwrap() + "\n").unwrap();
    let err = RatingStore::open(items, &path, &dir.path().join("audit.jsonl")).err().unwrap();
    assert!(matches!(err, StoreError::InvalidStored { line: 1, .. }));
}

#[test]
fn aggregate_hand_examples() {
    let items = items(3, 5);
    let qbc: Vec<_> = items.iter().filter(|i| i.method == PromptKind::Qbc).collect();
    let ratings = vec![
        rating(&qbc[0].item_id, "rater-1", Dimension::Fluency, 4),
        rating(&qbc[0].item_id, "rater-2", Dimension::Fluency, 4),
        rating(&qbc[0].item_id, "rater-3", Dimension::Fluency, 5),
        rating(&qbc[1].item_id, "rater-1", Dimension::VisualGrounding, 5),
        rating(&qbc[2].item_id, "rater-1", Dimension::VisualGrounding, 5),
    ];
    let summary = aggregate(&items, &ratings);
    assert_eq!(summary.std_kind, "population");
    let fl = summary.cell(PromptKind::Qbc, Dimension::Fluency).unwrap();
    assert!((fl.mean - 4.333_333_333).abs() < 1e-6);
    assert!((fl.std - 0.471_404_52).abs() < 1e-6);
    assert_eq!(fl.n_ratings, 3);
    assert_eq!(fl.expected, 9);
    assert!((fl.completion - 1.0 / 3.0).abs() < 1e-12);
    // Pairs (4,4), (4,5), (4,5).
    assert!((fl.agreement_mad.unwrap() - 2.0 / 3.0).abs() < 1e-12);
    let vg = summary.cell(PromptKind::Qbc, Dimension::VisualGrounding).unwrap();
    assert_eq!((vg.mean, vg.std), (5.0, 0.0));
    assert_eq!(vg.agreement_mad, None);
    assert!(summary.cell(PromptKind::Qbp, Dimension::Fluency).is_none());
    assert!(summary.rejected.is_empty());
}

#[test]
fn aggregate_rejects_inapplicable_and_keeps_last_write() {
    let items = items(2, 5);
    let qbp = first(&items, PromptKind::Qbp);
    let ratings = vec![
        rating(&qbp, "rater-1", Dimension::VisualGrounding, 5),
        rating(&qbp, "rater-1", Dimension::Fluency, 2),
        rating(&qbp, "rater-1", Dimension::Fluency, 4),
        rating(&qbp, "rater-2", Dimension::Fluency, 0),
    ];
    let summary = aggregate(&items, &ratings);
    assert_eq!(summary.rejected.len(), 2);
    let fl = summary.cell(PromptKind::Qbp, Dimension::Fluency).unwrap();
    assert_eq!((fl.n_ratings, fl.mean), (1, 4.0));
    assert!(summary.cell(PromptKind::Qbp, Dimension::VisualGrounding).is_none());
}

/// Score counts over {3, 4, 5} totalling `n` whose mean and population std
/// round to the targets at two decimals.
fn engineer_counts(n: i64, mean: f64, std: f64) -> (i64, i64, i64) {
    for c3 in 0..=n {
        for c5 in 0..=n - c3 {
            let c4 = n - c3 - c5;
            let sum = 3 * c3 + 4 * c4 + 5 * c5;
            let sq = 9 * c3 + 16 * c4 + 25 * c5;
            let m = sum as f64 / n as f64;
            let s = (sq as f64 / n as f64 - m * m).sqrt();
            if format!("{m:.2}") == format!("{mean:.2}") && format!("{s:.2}") == format!("{std:.2}") {
                return (c3, c4, c5);
            }
        }
    }
    panic!("no count vector reproduces the target moments");
}

#[test]
fn table_cell_fixture_reproduces_moments() {
    let items = items(100, 11);
    let (c3, c4, c5) = engineer_counts(300, 4.21, 0.55);
    let mut scores: Vec<i64> = std::iter::repeat_n(3, c3 as usize)
        .chain(std::iter::repeat_n(4, c4 as usize))
        .chain(std::iter::repeat_n(5, c5 as usize))
        .collect();
    qasynth::rng::SeededRng::new(8).shuffle(&mut scores);
    let mut ratings = Vec::new();
    let mut it = scores.into_iter();
    for item in items.iter().filter(|i| i.method == PromptKind::Qbp) {
        for e in &item.assigned_evaluators {
            ratings.push(rating(&item.item_id, e, Dimension::FactualConsistency, it.next().unwrap()));
        }
    }
    assert_eq!(ratings.len(), 300);
    let summary = aggregate(&items, &ratings);
    let cell = summary.cell(PromptKind::Qbp, Dimension::FactualConsistency).unwrap();
    assert_eq!(format!("{:.2} ± {:.2}", cell.mean, cell.std), "4.21 ± 0.55");
    assert_eq!(cell.completion, 1.0);

    // Shards merged through their moments equal the whole set.
    let mut merged = Moments::default();
    for shard in ratings.chunks(37) {
        merged.merge(&cell_moments(&items, shard)[&(PromptKind::Qbp, Dimension::FactualConsistency)]);
    }
    assert!((merged.mean().unwrap() - cell.mean).abs() < 1e-9);
    assert!((merged.std().unwrap() - cell.std).abs() < 1e-9);
}

proptest! {
    #[test]
    fn aggregation_is_permutation_invariant(scores in proptest::collection::vec(1i64..=5, 1..60), seed in any::<u64>()) {
        let items = items(20, 2);
        let qbp: Vec<_> = items.iter().filter(|i| i.method == PromptKind::Qbp).collect();
        let ratings: Vec<_> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| rating(&qbp[i % 20].item_id, &format!("rater-{}", i / 20 + 1), Dimension::Fluency, *s))
            .collect();
        let mut shuffled = ratings.clone();
        qasynth::rng::SeededRng::new(seed).shuffle(&mut shuffled);
        let a = aggregate(&items, &ratings);
        let b = aggregate(&items, &shuffled);
        let (ca, cb) = (&a.cells[0], &b.cells[0]);
        prop_assert_eq!(ca.n_ratings, cb.n_ratings);
        prop_assert!((ca.mean - cb.mean).abs() < 1e-12);
        prop_assert!((ca.std - cb.std).abs() < 1e-12);
        prop_assert!(ca.mean >= 1.0 && ca.mean <= 5.0 && ca.std >= 0.0);
        prop_assert!(ca.completion <= 1.0);
    }
}

fn app(items: Vec<EvalItem>, static_dir: Option<std::path::PathBuf>) -> (axum::Router, Arc<ReviewState>) {
    let state = Arc::new(ReviewState {
        store: RatingStore::in_memory(items),
        tokens: HashMap::from([
            ("tok-1".to_string(), "rater-1".to_string()),
            ("tok-2".to_string(), "rater-2".to_string()),
        ]),
        order_seed: 3,
    });
    (router(state.clone(), static_dir), state)
}

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, String) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = axum::body::to_bytes(res.into_body(), usize::MAX).await.unwrap();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn get(uri: &str, token: Option<&str>) -> Request<Body> {
    let mut b = Request::get(uri);
    if let Some(t) = token {
        b = b.header("authorization", format!("Bearer {t}"));
    }
    b.body(Body::empty()).unwrap()
}

fn post_rating(token: &str, body: Value) -> Request<Body> {
    Request::post("/api/ratings")
        .header("authorization", format!("Bearer {token}"))
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

#[tokio::test]
async fn http_items_require_matching_token() {
    let (app, _) = app(items(2, 1), None);
    assert_eq!(call(&app, get("/api/items?evaluator=rater-1", None)).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(call(&app, get("/api/items?evaluator=rater-1", Some("bad"))).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(call(&app, get("/api/items?evaluator=rater-1", Some("tok-2"))).await.0, StatusCode::FORBIDDEN);

    let (status, body) = call(&app, get("/api/items?evaluator=rater-1", Some("tok-1"))).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["assigned"], 4);
    assert_eq!(v["complete"], 0);
    for item in v["items"].as_array().unwrap() {
        match item["method"].as_str().unwrap() {
            "QBP" => {
                assert!(item["context"]["group"]["pairs"].is_array());
                assert_eq!(item["dimensions"], json!(["FactualConsistency", "LogicalCoherence", "Fluency"]));
            }
            "QBC" => {
                assert_eq!(item["context"]["pair"]["frame_thumbnails"].as_array().unwrap().len(), 4);
                assert!(item["context"]["pair"]["question"].is_string());
                assert_eq!(item["dimensions"], json!(["FactualConsistency", "VisualGrounding", "Fluency"]));
            }
            other => panic!("unexpected method {other}"),
        }
    }
}

#[tokio::test]
async fn http_ratings_round_trip() {
    let items = items(2, 1);
    let qbp = first(&items, PromptKind::Qbp);
    let qbc = first(&items, PromptKind::Qbc);
    let (app, state) = app(items, None);

    let ok = json!({"item_id": qbc, "evaluator_id": "rater-1", "dimension": "VisualGrounding", "score": 4});
    let (status, body) = call(&app, post_rating("tok-1", ok.clone())).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["status"], "created");
    let (_, body) = call(&app, post_rating("tok-1", ok)).await;
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["status"], "replaced");

    let cases = [
        (json!({"item_id": qbp, "evaluator_id": "rater-1", "dimension": "VisualGrounding", "score": 4}), StatusCode::UNPROCESSABLE_ENTITY, "inapplicable_dimension"),
        (json!({"item_id": qbp, "evaluator_id": "rater-1", "dimension": "Fluency", "score": 6}), StatusCode::UNPROCESSABLE_ENTITY, "score_out_of_range"),
        (json!({"item_id": "qbp:x/y", "evaluator_id": "rater-1", "dimension": "Fluency", "score": 3}), StatusCode::NOT_FOUND, "unknown_item"),
    ];
    for (body, status, class) in cases {
        let (got, text) = call(&app, post_rating("tok-1", body)).await;
        assert_eq!(got, status, "{text}");
        assert_eq!(serde_json::from_str::<Value>(&text).unwrap()["error"], class);
    }
    let spoof = json!({"item_id": qbp, "evaluator_id": "rater-2", "dimension": "Fluency", "score": 3});
    assert_eq!(call(&app, post_rating("tok-1", spoof)).await.0, StatusCode::FORBIDDEN);
    let malformed = Request::post("/api/ratings")
        .header("authorization", "Bearer tok-1")
        .header("content-type", "application/json")
        .body(Body::from("{\"item_id\": 3}"))
        .unwrap();
    assert!(call(&app, malformed).await.0.is_client_error());

    assert_eq!(state.store.ratings().len(), 1);
    let (status, body) = call(&app, get("/api/summary", Some("tok-2"))).await;
    assert_eq!(status, StatusCode::OK);
    let summary: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(summary["cells"][0]["dimension"], "VisualGrounding");
    assert_eq!(summary["cells"][0]["n_ratings"], 1);
    assert_eq!(summary["std_kind"], "population");

    let (_, body) = call(&app, get("/api/items?evaluator=rater-1", Some("tok-1"))).await;
    let v: Value = serde_json::from_str(&body).unwrap();
    let rated = v["items"]
        .as_array()
        .unwrap()
        .iter()
        .find(|i| i["item_id"] == qbc.as_str())
        .unwrap();
    assert_eq!(rated["rated"]["VisualGrounding"], 4);
}

#[tokio::test]
async fn http_rubric_and_static_ui() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>rater</html>").unwrap();
    let (app, _) = app(items(1, 1), Some(dir.path().to_path_buf()));
    let (status, body) = call(&app, get("/api/rubric", None)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, qasynth::humaneval::RUBRIC);
    for dim in ["Factual Consistency", "Logical Coherence", "Visual Grounding", "Fluency"] {
        assert!(body.contains(dim));
    }
    assert_eq!(body.matches("Guiding Question:").count(), 4);
    let (status, body) = call(&app, get("/index.html", None)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, "<html>rater</html>");
}

#[tokio::test]
async fn concurrent_submissions_are_all_kept() {
    let items = items(30, 6);
    let (app, state) = app(items.clone(), None);
    let mut tasks = Vec::new();
    for item in items.iter().filter(|i| i.assigned_evaluators.contains(&"rater-1".to_string())) {
        for dim in Dimension::for_method(item.method) {
            let app = app.clone();
            let body = json!({"item_id": item.item_id, "evaluator_id": "rater-1", "dimension": dim, "score": 5});
            tasks.push(tokio::spawn(async move { call(&app, post_rating("tok-1", body)).await.0 }));
        }
    }
    let n = tasks.len();
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::CREATED);
    }
    assert_eq!(n, 180);
    assert_eq!(state.store.ratings().len(), 180);
}
