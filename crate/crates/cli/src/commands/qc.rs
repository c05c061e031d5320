use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use qasynth::corpus;
use qasynth::jsonl;
use qasynth::qualitygate::{self, CheckStatus, FilterPolicy, FilterSummary, QcRecord, QcReport};
use qasynth::synthgen::{NarrativeRecord, RationaleRecord};
use serde::Serialize;

use super::Ctx;
use crate::args::QcArgs;
use crate::error::fail;

fn apply<R: QcRecord + Clone + Serialize>(
    ctx: &Ctx,
    label: &str,
    records: &[R],
    reports: &[QcReport],
    policy: FilterPolicy,
) -> Result<FilterSummary> {
    let (kept, summary) = qualitygate::filter(records, reports, policy)?;
    jsonl::write(&ctx.run_file(&format!("{label}.qc.jsonl")), reports)?;
    jsonl::write(&ctx.run_file(&format!("{label}.filtered.jsonl")), &kept)?;
    let count = |s| summary.qc.overall.get(&s).copied().unwrap_or(0);
    println!(
        "{label}: {} checked, {} fail, {} warn, {} kept",
        summary.input,
        count(CheckStatus::Fail),
        count(CheckStatus::Warn),
        summary.kept
    );
    Ok(summary)
}

fn narratives(ctx: &Ctx, path: &Path, corpus_path: Option<&Path>, policy: FilterPolicy) -> Result<FilterSummary> {
    let corpus_path = corpus_path
        .ok_or_else(|| fail("usage", "checking narratives needs --corpus with their source groups"))?;
    let groups = corpus::group(&corpus::ingest(corpus_path, None)?)?;
    let records: Vec<NarrativeRecord> = jsonl::read(path)?;
    let reports = qualitygate::check_narratives(&records, &groups, &ctx.settings.qc)?;
    apply(ctx, "narratives", &records, &reports, policy)
}

fn rationales(ctx: &Ctx, path: &Path, policy: FilterPolicy) -> Result<FilterSummary> {
    let records: Vec<RationaleRecord> = jsonl::read(path)?;
    let reports = qualitygate::check_rationales(&records, &ctx.settings.qc);
    apply(ctx, "rationales", &records, &reports, policy)
}

pub fn run(ctx: &Ctx, args: &QcArgs) -> Result<()> {
    if args.narratives.is_none() && args.rationales.is_none() {
        return Err(fail("usage", "pass --narratives, --rationales or both"));
    }
    let policy: FilterPolicy = args.policy.parse().map_err(|e: String| fail("usage", e))?;
    let mut summaries = BTreeMap::new();
    if let Some(path) = &args.narratives {
        summaries.insert("narratives", narratives(ctx, path, args.corpus.as_deref(), policy)?);
    }
    if let Some(path) = &args.rationales {
        summaries.insert("rationales", rationales(ctx, path, policy)?);
    }
    jsonl::write_document(&ctx.run_file("qc_summary.json"), &summaries)?;
    Ok(())
}
