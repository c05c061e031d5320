use std::collections::BTreeMap;

use anyhow::Result;
use qasynth::evalharness::{self, AccuracyReport, PredictionRecord};
use qasynth::jsonl;

use super::{named_path, write_text, Ctx};
use crate::args::{ConvergenceArgs, MatrixArgs, ScoreArgs};
use crate::error::fail;

pub fn score(ctx: &Ctx, args: &ScoreArgs) -> Result<()> {
    let preds: Vec<PredictionRecord> = jsonl::read(&args.predictions)?;
    let target = match &args.test_target {
        Some(t) => t.clone(),
        None => {
            let mut datasets: Vec<&str> = preds.iter().map(|p| p.dataset_id.as_str()).collect();
            datasets.sort_unstable();
            datasets.dedup();
            match datasets.as_slice() {
                [one] => one.to_string(),
                [] => "unspecified".to_string(),
                _ => {
                    return Err(fail(
                        "usage",
                        "predictions span several datasets; pass --test-target",
                    ))
                }
            }
        }
    };
    let report = evalharness::score(&preds, &args.train_source, &target);
    jsonl::write_document(&ctx.output(args.out.as_ref(), "score.json"), &report)?;
    println!("accuracy {:.2}", report.accuracy);
    Ok(())
}

pub fn matrix(ctx: &Ctx, args: &MatrixArgs) -> Result<()> {
    let reports = args
        .reports
        .iter()
        .map(|p| jsonl::read_document::<AccuracyReport>(p))
        .collect::<Result<Vec<_>, _>>()?;
    let matrix = evalharness::transfer_matrix(&reports, args.baseline.as_deref())?;
    jsonl::write_document(&ctx.run_file("matrix.json"), &matrix)?;
    write_text(&ctx.run_file("matrix.csv"), &matrix.to_csv())?;
    print!("{}", matrix.render_text());
    Ok(())
}

pub fn convergence(ctx: &Ctx, args: &ConvergenceArgs) -> Result<()> {
    let mut series = BTreeMap::new();
    for arg in &args.series {
        let (name, path) = named_path(arg, "series")?;
        let points = evalharness::read_training_log(&path)?;
        if series.insert(name.clone(), points).is_some() {
            return Err(fail("usage", format!("--series {name:?} given twice")));
        }
    }
    let report = evalharness::analyze_convergence(
        &series,
        args.window,
        args.delta,
        args.baseline.as_deref(),
        args.target.as_deref(),
    )?;
    jsonl::write_document(&ctx.run_file("convergence.json"), &report)?;
    for (name, s) in &report.series {
        println!("{name} plateau {} final {:.2}", s.plateau_step, s.final_accuracy);
    }
    if let Some(speedup) = report.speedup {
        println!("speedup {speedup:.2}");
    }
    Ok(())
}
