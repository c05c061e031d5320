use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use anyhow::Result;
use qasynth::corpus;
use qasynth::humaneval::{self, EvalItem, RatingRecord, RatingStore, ReviewState, SamplingConfig};
use qasynth::jsonl;
use qasynth::synthgen::{NarrativeRecord, RationaleRecord};
use tracing::info;

use super::Ctx;
use crate::args::{EvalAggregateArgs, EvalSampleArgs, ServeArgs};
use crate::error::fail;

pub fn sample(ctx: &Ctx, args: &EvalSampleArgs) -> Result<()> {
    let narratives: Vec<NarrativeRecord> = jsonl::read(&args.narratives)?;
    let rationales: Vec<RationaleRecord> = jsonl::read(&args.rationales)?;
    let groups = corpus::group(&corpus::ingest(&args.corpus, None)?)?;
    let config = SamplingConfig {
        n_per_method: args.n_per_method,
        seed: ctx.settings.seed,
        evaluators: args.evaluators.clone(),
        raters_per_item: args.raters_per_item,
        sample_count: ctx.settings.synth.sample_count,
        default_total_frames: ctx.settings.synth.default_total_frames,
        ..SamplingConfig::default()
    };
    let items = humaneval::sample_items(&narratives, &rationales, &groups, &config)?;
    jsonl::write(&ctx.run_file("eval_items.jsonl"), &items)?;
    let tokens = humaneval::issue_tokens(&args.evaluators);
    jsonl::write_document(&ctx.run_file("tokens.json"), &tokens)?;
    println!(
        "eval-sample: {} items for {} evaluators",
        items.len(),
        args.evaluators.len()
    );
    Ok(())
}

pub async fn serve(ctx: &Ctx, args: &ServeArgs) -> Result<()> {
    let items: Vec<EvalItem> = jsonl::read(&args.items)?;
    let tokens: HashMap<String, String> = jsonl::read_document(&args.tokens)?;
    let ratings = ctx.output(args.ratings.as_ref(), "ratings.jsonl");
    let audit = ratings.with_extension("audit.jsonl");
    let state = ReviewState {
        store: RatingStore::open(items, &ratings, &audit)?,
        tokens,
        order_seed: ctx.settings.seed,
    };
    let listener = tokio::net::TcpListener::bind(&args.addr)
        .await
        .map_err(|e| fail("io", format!("cannot bind {}: {e}", args.addr)))?;
    let addr = listener.local_addr()?;
    println!("listening on http://{addr}");
    std::io::stdout().flush()?;
    humaneval::serve(listener, Arc::new(state), args.static_dir.clone(), async {
        let _ = tokio::signal::ctrl_c().await;
        info!("shutting down");
    })
    .await?;
    Ok(())
}

pub fn aggregate(ctx: &Ctx, args: &EvalAggregateArgs) -> Result<()> {
    let items: Vec<EvalItem> = jsonl::read(&args.items)?;
    let ratings: Vec<RatingRecord> = jsonl::read(&args.ratings)?;
    let summary = humaneval::aggregate(&items, &ratings);
    jsonl::write_document(&ctx.run_file("eval_summary.json"), &summary)?;
    print!("{}", summary.render_text());
    if !summary.rejected.is_empty() {
        return Err(fail(
            "rejected_ratings",
            format!(
                "{} ratings rejected; details in eval_summary.json",
                summary.rejected.len()
            ),
        ));
    }
    Ok(())
}
