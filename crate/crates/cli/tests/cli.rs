use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use qasynth::corpus::{self, synthetic::CorpusShape, QaPair};
use qasynth::evalharness::PredictionRecord;
use qasynth::jsonl;
use qasynth::promptkit::TemplateSet;
use serde_json::Value;

fn bin(run_dir: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qasynth"));
    for (key, _) in std::env::vars() {
        if key.starts_with("QASYNTH_") {
            cmd.env_remove(key);
        }
    }
    cmd.arg("--run-dir").arg(run_dir).arg("--log-level").arg("error");
    cmd
}

fn run(run_dir: &Path, args: &[&str]) -> Output {
    bin(run_dir).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn small_corpus(dir: &Path) -> (PathBuf, Vec<QaPair>) {
    let pairs: Vec<QaPair> = corpus::synthetic::generate(&CorpusShape::new("SMALL", 4, 10, 3))
        .into_iter()
        .enumerate()
        .map(|(i, mut p)| {
            p.question = format!("{} (clip {i})", p.question);
            p
        })
        .collect();
    let path = dir.join("small.jsonl");
    corpus::write_corpus(&path, &pairs).unwrap();
    (path, pairs)
}

/// Replay file answering every prompt except the QBC prompts of `skip`.
fn replay(dir: &Path, pairs: &[QaPair], skip: &[usize]) -> PathBuf {
    let t = TemplateSet::builtin().unwrap();
    let mut map = BTreeMap::new();
    for g in corpus::group(pairs).unwrap() {
        map.insert(
            t.render_qbp(&g).prompt_hash,
            "The friends walk across the snow together and stop near the parked sled to rest for a while.".to_string(),
        );
    }
    for (i, p) in pairs.iter().enumerate() {
        if !skip.contains(&i) {
            map.insert(
                t.render_qbc(p).prompt_hash,
                format!("Frame {i} shows the subject near the center of the scene."),
            );
        }
    }
    let path = dir.join("replay.json");
    jsonl::write_document(&path, &map).unwrap();
    path
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_named_path_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["mix", "--source", "nopath", "--recipe", "a"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error: usage: "));
}

#[test]
fn runtime_errors_print_one_classified_line() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"dataset\":\"X\"\n").unwrap();
    let out = run(tmp.path(), &["ingest", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: corpus: "), "{err}");
    assert!(err.contains(":1: malformed record"), "{err}");
}

#[test]
fn ingest_writes_canonical_corpus_and_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let (path, pairs) = small_corpus(tmp.path());
    let run_dir = tmp.path().join("run");
    let out = stdout(&run(&run_dir, &["ingest", s(&path), "--dataset", "SMALL"]));
    assert_eq!(out.trim(), "ingested 10 pairs in 4 videos");
    assert_eq!(corpus::ingest(&run_dir.join("corpus.jsonl"), None).unwrap(), pairs);
    let snap = read_json(&run_dir.join("ingest.config.json"));
    assert_eq!(snap["command"], "ingest");
    assert_eq!(snap["args"]["ingest"]["dataset"], "SMALL");
}

#[test]
fn flags_beat_environment_beat_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let (path, _) = small_corpus(tmp.path());
    let config = tmp.path().join("qasynth.toml");
    std::fs::write(&config, "model = \"file-model\"\nseed = 5\n[synth]\ntemperature = 0.2\n").unwrap();
    let model = |extra_env: Option<&str>, flag: Option<&str>| {
        let run_dir = tmp.path().join("prec");
        let mut cmd = bin(&run_dir);
        cmd.arg("--config").arg(&config);
        if let Some(m) = extra_env {
            cmd.env("QASYNTH_MODEL", m);
        }
        if let Some(m) = flag {
            cmd.args(["--model", m]);
        }
        stdout(&cmd.args(["stats", s(&path)]).output().unwrap());
        let snap = read_json(&run_dir.join("stats.config.json"));
        (
            snap["settings"]["model"].as_str().unwrap().to_string(),
            snap["settings"]["seed"].as_u64().unwrap(),
            snap["settings"]["synth"]["temperature"].as_f64().unwrap(),
        )
    };
    assert_eq!(model(None, None), ("file-model".into(), 5, 0.2));
    assert_eq!(model(Some("env-model"), None).0, "env-model");
    assert_eq!(model(Some("env-model"), Some("flag-model")).0, "flag-model");
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let (path, _) = small_corpus(tmp.path());
    let config = tmp.path().join("bad.toml");
    std::fs::write(&config, "modle = \"typo\"\n").unwrap();
    let out = run(tmp.path(), &["--config", s(&config), "stats", s(&path)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error: config: "));
}

#[test]
fn stats_prints_table_rows_and_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("star.jsonl");
    corpus::write_corpus(&path, &corpus::synthetic::generate(&CorpusShape::new("STAR", 3000, 45000, 1))).unwrap();
    let run_dir = tmp.path().join("run");
    assert_eq!(stdout(&run(&run_dir, &["stats", s(&path)])), "STAR 3000 45000 15.0\n");
    let csv = std::fs::read_to_string(run_dir.join("stats.csv")).unwrap();
    assert_eq!(csv, "dataset,videos,qa_pairs,mean_qa_per_video\nSTAR,3000,45000,15.0000\n");
}

#[test]
fn synthesis_without_backend_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (path, _) = small_corpus(tmp.path());
    let out = run(tmp.path(), &["synth-qbp", s(&path)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error: config: no backend configured"));
}

#[test]
fn partial_failures_are_reported_and_fatal_only_when_strict() {
    let tmp = tempfile::tempdir().unwrap();
    let (path, pairs) = small_corpus(tmp.path());
    let backend = format!("replay:{}", s(&replay(tmp.path(), &pairs, &[2, 7])));
    let run_dir = tmp.path().join("run");
    let out = stdout(&run(&run_dir, &["--backend", &backend, "synth-qbc", s(&path)]));
    assert!(out.contains("8 records, 2 failed"), "{out}");
    let manifest = read_json(&run_dir.join("rationales.manifest.json"));
    assert_eq!(manifest["failed"], 2);
    assert_eq!(manifest["records"], 8);
    assert_eq!(jsonl::read::<Value>(&run_dir.join("rationales.jsonl")).unwrap().len(), 8);

    let strict = run(&tmp.path().join("strict"), &["--strict", "--backend", &backend, "synth-qbc", s(&path)]);
    assert_eq!(strict.status.code(), Some(1));
    assert!(stderr(&strict).starts_with("error: partial_failure: 2 of 10 items failed"));
}

#[test]
fn pipeline_from_corpus_to_training_file_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (path, pairs) = small_corpus(tmp.path());
    let backend = format!("mock:{}", s(&replay(tmp.path(), &pairs, &[])));
    let go = |dir: &str| {
        let run_dir = tmp.path().join(dir);
        stdout(&run(&run_dir, &["--backend", &backend, "synth-qbp", s(&path)]));
        stdout(&run(&run_dir, &["--backend", &backend, "synth-qbc", s(&path)]));
        let n = run_dir.join("narratives.jsonl");
        let r = run_dir.join("rationales.jsonl");
        let qc = stdout(&run(&run_dir, &["qc", "--narratives", s(&n), "--corpus", s(&path), "--rationales", s(&r)]));
        assert!(qc.contains("narratives: 4 checked"), "{qc}");
        let emit = stdout(&run(&run_dir, &[
            "emit",
            "--narratives", s(&run_dir.join("narratives.filtered.jsonl")),
            "--rationales", s(&run_dir.join("rationales.filtered.jsonl")),
        ]));
        assert!(emit.starts_with("emit: 14 samples"), "{emit}");
        let samples = run_dir.join("train.samples.jsonl");
        stdout(&run(&run_dir, &["--seed", "9", "subset", s(&samples), "--size", "5"]));
        let mix = stdout(&run(&run_dir, &[
            "--seed", "9", "mix",
            "--source", &format!("a={}", s(&samples)),
            "--source", &format!("b={}", s(&run_dir.join("subset-5.samples.jsonl"))),
            "--recipe", "a,b",
        ]));
        assert!(mix.starts_with("mix: 19 samples"), "{mix}");
        ["train.jsonl", "train.manifest.json", "subset-5.jsonl", "mix.jsonl", "mix.manifest.json"]
            .map(|f| std::fs::read(run_dir.join(f)).unwrap())
    };
    assert_eq!(go("one"), go("two"));
}

#[test]
fn mix_rejects_a_repeated_recipe_entry() {
    let tmp = tempfile::tempdir().unwrap();
    let samples = tmp.path().join("s.jsonl");
    std::fs::write(&samples, "").unwrap();
    let out = run(tmp.path(), &["mix", "--source", &format!("a={}", s(&samples)), "--recipe", "a,a"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error: emit: "));
}

#[test]
fn score_all_correct_and_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let preds: Vec<PredictionRecord> = (0..4)
        .map(|i| PredictionRecord {
            dataset_id: "STAR".into(),
            video_id: format!("v{i}"),
            qid: "q1".into(),
            predicted: "To take a photo.".into(),
            gold: "to take a photo".into(),
            options: None,
            gold_index: None,
            question_type: None,
        })
        .collect();
    let path = tmp.path().join("preds.jsonl");
    jsonl::write(&path, &preds).unwrap();
    let run_dir = tmp.path().join("run");
    let report = run_dir.join("raw-star.json");
    let out = stdout(&run(&run_dir, &["score", s(&path), "--train-source", "raw", "--out", s(&report)]));
    assert_eq!(out, "accuracy 100.00\n");
    assert_eq!(read_json(&report)["test_target"], "STAR");
    let matrix = stdout(&run(&run_dir, &["matrix", s(&report), "--baseline", "raw"]));
    assert!(matrix.contains("STAR"), "{matrix}");
    assert!(run_dir.join("matrix.csv").exists());
}

#[test]
fn eval_sample_issues_items_and_tokens() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    let out = stdout(&run(&run_dir, &[
        "eval-sample",
        "--narratives", s(&fixture("qc_narratives.jsonl")),
        "--rationales", s(&fixture("qc_rationales.jsonl")),
        "--corpus", s(&fixture("qc_corpus.jsonl")),
        "--n-per-method", "10",
    ]));
    assert_eq!(out.trim(), "eval-sample: 20 items for 3 evaluators");
    let tokens: BTreeMap<String, String> = jsonl::read_document(&run_dir.join("tokens.json")).unwrap();
    assert_eq!(tokens.len(), 3);
    assert!(tokens.keys().all(|t| t.len() == 32));
    assert_eq!(jsonl::read::<Value>(&run_dir.join("eval_items.jsonl")).unwrap().len(), 20);
}

#[test]
fn serve_review_answers_http() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    stdout(&run(&run_dir, &[
        "eval-sample",
        "--narratives", s(&fixture("qc_narratives.jsonl")),
        "--rationales", s(&fixture("qc_rationales.jsonl")),
        "--corpus", s(&fixture("qc_corpus.jsonl")),
        "--n-per-method", "2",
    ]));
    let mut child = bin(&run_dir)
        .args([
            "serve-review",
            "--items", s(&run_dir.join("eval_items.jsonl")),
            "--tokens", s(&run_dir.join("tokens.json")),
            "--addr", "127.0.0.1:0",
        ])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").unwrap().to_string();

    let get = |path: &str| {
        let mut stream = TcpStream::connect(&addr).unwrap();
        write!(stream, "GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
        let mut body = String::new();
        stream.read_to_string(&mut body).unwrap();
        body
    };
    let rubric = get("/api/rubric");
    let unauthorized = get("/api/items?evaluator=rater-1");
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(rubric.starts_with("HTTP/1.1 200"), "{rubric}");
    assert!(unauthorized.starts_with("HTTP/1.1 401"), "{unauthorized}");
}
