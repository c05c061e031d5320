use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use qasynth::emitter::{self, manifest_path, TrainingSample};
use qasynth::jsonl;
use qasynth::synthgen::{NarrativeRecord, RationaleRecord};

use super::{named_path, Ctx};
use crate::args::{EmitArgs, MixArgs, SubsetArgs};
use crate::error::fail;

/// Writes the training file, its manifest, and the sample file that
/// `subset` and `mix` read back.
fn write_all(path: &Path, samples: &[TrainingSample], seeds: &BTreeMap<String, u64>) -> Result<String> {
    let manifest = emitter::write_training_file(samples, path, seeds)?;
    jsonl::write_document(&manifest_path(path), &manifest)?;
    jsonl::write(&samples_path(path), samples)?;
    Ok(manifest.sha256)
}

/// `train.jsonl` → `train.samples.jsonl`.
fn samples_path(path: &Path) -> std::path::PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.samples.jsonl"))
}

pub fn emit(ctx: &Ctx, args: &EmitArgs) -> Result<()> {
    if args.narratives.is_none() && args.rationales.is_none() {
        return Err(fail("usage", "pass --narratives, --rationales or both"));
    }
    let narratives: Vec<NarrativeRecord> = match &args.narratives {
        Some(p) => jsonl::read(p)?,
        None => Vec::new(),
    };
    let rationales: Vec<RationaleRecord> = match &args.rationales {
        Some(p) => jsonl::read(p)?,
        None => Vec::new(),
    };
    let assembly = emitter::assemble(&narratives, &rationales);
    let out = ctx.output(args.out.as_ref(), "train.jsonl");
    let sha = write_all(&out, &assembly.samples, &BTreeMap::new())?;
    println!(
        "emit: {} samples ({} duplicates dropped) sha256 {sha}",
        assembly.samples.len(),
        assembly.duplicates.len()
    );
    Ok(())
}

pub fn subset(ctx: &Ctx, args: &SubsetArgs) -> Result<()> {
    let samples: Vec<TrainingSample> = jsonl::read(&args.samples)?;
    let seed = ctx.settings.seed;
    let seeds = BTreeMap::from([("subset".to_string(), seed)]);
    for &size in &args.sizes {
        let picked = emitter::subset(&samples, size, seed)?;
        let out = ctx.run_file(&format!("subset-{size}.jsonl"));
        let sha = write_all(&out, &picked, &seeds)?;
        println!("subset {size} sha256 {sha}");
    }
    Ok(())
}

pub fn mix(ctx: &Ctx, args: &MixArgs) -> Result<()> {
    let mut sources = BTreeMap::new();
    for arg in &args.sources {
        let (name, path) = named_path(arg, "source")?;
        let samples: Vec<TrainingSample> = jsonl::read(&path)?;
        if sources.insert(name.clone(), samples).is_some() {
            return Err(fail("usage", format!("--source {name:?} given twice")));
        }
    }
    let seed = ctx.settings.seed;
    let mixed = emitter::mix(&sources, &args.recipe, seed)?;
    let out = ctx.output(args.out.as_ref(), "mix.jsonl");
    let sha = write_all(&out, &mixed, &BTreeMap::from([("mix".to_string(), seed)]))?;
    println!("mix: {} samples sha256 {sha}", mixed.len());
    Ok(())
}
