use anyhow::Result;
use qasynth::corpus::{self, QaPair};
use qasynth::jsonl;

use super::{write_text, Ctx};
use crate::args::{IngestArgs, StatsArgs};

pub fn ingest(ctx: &Ctx, args: &IngestArgs) -> Result<()> {
    let pairs = corpus::ingest(&args.input, args.dataset.as_deref())?;
    let groups = corpus::group(&pairs)?;
    let out = ctx.output(args.out.as_ref(), "corpus.jsonl");
    corpus::write_corpus(&out, &pairs)?;
    println!("ingested {} pairs in {} videos", pairs.len(), groups.len());
    Ok(())
}

pub fn stats(ctx: &Ctx, args: &StatsArgs) -> Result<()> {
    let mut pairs: Vec<QaPair> = Vec::new();
    for input in &args.inputs {
        pairs.extend(corpus::ingest(input, None)?);
    }
    let stats = corpus::compute_stats(&corpus::group(&pairs)?);
    jsonl::write_document(&ctx.run_file("stats.json"), &stats)?;
    let csv = stats.to_csv();
    write_text(&ctx.run_file("stats.csv"), &csv)?;
    if args.csv {
        print!("{csv}");
    } else {
        for ds in stats.datasets.values() {
            println!("{}", ds.table_row());
        }
    }
    Ok(())
}
