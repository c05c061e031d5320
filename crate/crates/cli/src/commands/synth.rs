use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::Result;
use chrono::{DateTime, Utc};
use qasynth::corpus;
use qasynth::emitter::manifest_path;
use qasynth::hashing::sha256_hex;
use qasynth::jsonl;
use qasynth::promptkit::{PromptKind, TemplateSet};
use qasynth::synthgen::{
    DiskCache, GenerationBackend, HttpBackend, HttpBackendConfig, RecordingBackend, ReplayBackend,
    SynthConfig, SynthOutcome, Synthesizer,
};
use serde::Serialize;
use tracing::warn;

use super::Ctx;
use crate::args::SynthArgs;
use crate::error::fail;
use crate::settings::Settings;

#[derive(Debug, Serialize)]
struct SynthManifest {
    kind: PromptKind,
    job_id: String,
    model: String,
    backend: String,
    output: String,
    output_sha256: String,
    items: usize,
    records: usize,
    failed: usize,
    failed_keys: Vec<String>,
    pending: usize,
    backend_calls: u64,
    cache_hits: u64,
    stopped: bool,
    started_at: DateTime<Utc>,
    finished_at: DateTime<Utc>,
}

struct Backend {
    inner: Arc<dyn GenerationBackend>,
    recorder: Option<Arc<RecordingBackend>>,
}

fn http_backend(settings: &Settings) -> Result<HttpBackend> {
    let endpoint = std::env::var(&settings.http.endpoint_env).map_err(|_| {
        fail(
            "config",
            format!("the http backend needs {} set to the endpoint URL", settings.http.endpoint_env),
        )
    })?;
    let api_key = std::env::var(&settings.http.api_key_env).ok();
    Ok(HttpBackend::new(HttpBackendConfig {
        endpoint,
        api_key,
        timeout: Duration::from_secs(settings.http.timeout_secs),
    })?)
}

fn build_backend(settings: &Settings) -> Result<Backend> {
    let spec = settings
        .backend
        .as_deref()
        .ok_or_else(|| fail("config", "no backend configured; pass --backend"))?;
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let need_path = || {
        if arg.is_empty() {
            Err(fail("config", format!("backend {kind:?} needs a replay file: {kind}:<path>")))
        } else {
            Ok(Path::new(arg))
        }
    };
    match kind {
        "mock" | "replay" => Ok(Backend {
            inner: Arc::new(ReplayBackend::from_file(need_path()?)?),
            recorder: None,
        }),
        "http" => Ok(Backend {
            inner: Arc::new(http_backend(settings)?),
            recorder: None,
        }),
        "record" => {
            let recorder = Arc::new(RecordingBackend::new(
                Arc::new(http_backend(settings)?),
                need_path()?.to_path_buf(),
            )?);
            Ok(Backend {
                inner: recorder.clone(),
                recorder: Some(recorder),
            })
        }
        other => Err(fail("config", format!("unknown backend {other:?}"))),
    }
}

fn synth_config(ctx: &Ctx, args: &SynthArgs) -> Result<SynthConfig> {
    let s = &ctx.settings;
    let mut retry = s.synth.retry();
    if let Some(n) = args.max_attempts {
        retry.max_attempts = n;
    }
    let frame_counts: BTreeMap<String, u32> = match &args.frame_counts {
        Some(path) => jsonl::read_document(path)?,
        None => BTreeMap::new(),
    };
    let config = SynthConfig {
        model_id: s.model.clone(),
        temperature: args.temperature.unwrap_or(s.synth.temperature),
        qbp_max_words: s.synth.qbp_max_words,
        qbc_max_words: s.synth.qbc_max_words,
        concurrency: s.concurrency,
        retry,
        sample_count: s.synth.sample_count,
        default_total_frames: s.synth.default_total_frames,
        frame_counts,
        dedup_pairs: args.dedup_pairs,
        job_id: args.job_id.clone(),
    };
    config.validate().map_err(|e| fail("config", e))?;
    Ok(config)
}

/// Raises `flag` on the first Ctrl-C. In-flight calls finish and the journal
/// keeps everything completed so far.
fn stop_on_interrupt() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let handle = Arc::clone(&flag);
    tokio::spawn(async move {
        if tokio::signal::ctrl_c().await.is_ok() {
            warn!("interrupt received, finishing in-flight calls");
            handle.store(true, Ordering::SeqCst);
        }
    });
    flag
}

fn synthesizer(ctx: &Ctx, args: &SynthArgs, backend: &Backend) -> Result<Synthesizer> {
    let templates = match &args.templates {
        Some(dir) => TemplateSet::load(dir)?,
        None => TemplateSet::builtin()?,
    };
    Ok(Synthesizer::new(
        templates,
        Arc::clone(&backend.inner),
        Arc::new(DiskCache::new(&ctx.settings.cache_dir)),
        synth_config(ctx, args)?,
    )
    .with_job_root(ctx.run_file("jobs"))
    .with_stop_flag(stop_on_interrupt()))
}

fn finish<R: Serialize>(
    ctx: &Ctx,
    args: &SynthArgs,
    kind: PromptKind,
    default_name: &str,
    started_at: DateTime<Utc>,
    backend: &Backend,
    outcome: SynthOutcome<R>,
) -> Result<()> {
    if let Some(recorder) = &backend.recorder {
        recorder.save()?;
    }
    let out = ctx.output(args.out.as_ref(), default_name);
    jsonl::write(&out, &outcome.records)?;
    let body = std::fs::read(&out)?;
    let state = &outcome.state;
    let manifest = SynthManifest {
        kind,
        job_id: state.job_id.clone(),
        model: ctx.settings.model.clone(),
        backend: ctx.settings.backend.clone().unwrap_or_default(),
        output: out.display().to_string(),
        output_sha256: sha256_hex(&body),
        items: state.pending.len() + state.done.len() + state.failed.len(),
        records: outcome.records.len(),
        failed: state.failed.len(),
        failed_keys: state.failed.iter().cloned().collect(),
        pending: state.pending.len(),
        backend_calls: outcome.backend_calls,
        cache_hits: outcome.cache_hits,
        stopped: outcome.stopped,
        started_at,
        finished_at: Utc::now(),
    };
    jsonl::write_document(&manifest_path(&out), &manifest)?;
    println!(
        "{}: {} records, {} failed, {} backend calls, {} cache hits",
        ctx.command, manifest.records, manifest.failed, manifest.backend_calls, manifest.cache_hits
    );
    if outcome.stopped {
        return Err(fail(
            "interrupted",
            format!(
                "stopped with {} items pending; rerun the same command to resume job {}",
                manifest.pending, manifest.job_id
            ),
        ));
    }
    if manifest.failed > 0 {
        warn!(failed = manifest.failed, "some items failed; see the manifest");
        if ctx.settings.strict {
            return Err(fail(
                "partial_failure",
                format!("{} of {} items failed", manifest.failed, manifest.items),
            ));
        }
    }
    Ok(())
}

pub async fn qbp(ctx: &Ctx, args: &SynthArgs) -> Result<()> {
    let started_at = Utc::now();
    let groups = corpus::group(&corpus::ingest(&args.corpus, None)?)?;
    let backend = build_backend(&ctx.settings)?;
    let outcome = synthesizer(ctx, args, &backend)?.synthesize_qbp(&groups).await?;
    finish(ctx, args, PromptKind::Qbp, "narratives.jsonl", started_at, &backend, outcome)
}

pub async fn qbc(ctx: &Ctx, args: &SynthArgs) -> Result<()> {
    let started_at = Utc::now();
    let pairs = corpus::ingest(&args.corpus, None)?;
    corpus::group(&pairs)?;
    let backend = build_backend(&ctx.settings)?;
    let outcome = synthesizer(ctx, args, &backend)?.synthesize_qbc(&pairs).await?;
    finish(ctx, args, PromptKind::Qbc, "rationales.jsonl", started_at, &backend, outcome)
}
