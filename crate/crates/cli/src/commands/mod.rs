mod data;
mod emit;
mod eval;
mod qc;
mod review;
mod synth;

use std::path::{Path, PathBuf};

use anyhow::Result;
use qasynth::jsonl;
use serde::Serialize;

use crate::args::Command;
use crate::error::fail;
use crate::settings::Settings;

pub struct Ctx {
    pub settings: Settings,
    pub command: &'static str,
}

impl Ctx {
    /// `explicit` if given, else `name` inside the run directory.
    pub fn output(&self, explicit: Option<&PathBuf>, name: &str) -> PathBuf {
        explicit
            .cloned()
            .unwrap_or_else(|| self.settings.run_dir.join(name))
    }

    pub fn run_file(&self, name: &str) -> PathBuf {
        self.settings.run_dir.join(name)
    }

    fn write_snapshot(&self, command: &Command) -> Result<()> {
        #[derive(Serialize)]
        struct Snapshot<'a> {
            command: &'a str,
            settings: &'a Settings,
            args: &'a Command,
        }
        let path = self.run_file(&format!("{}.config.json", self.command));
        jsonl::write_document(
            &path,
            &Snapshot {
                command: self.command,
                settings: &self.settings,
                args: command,
            },
        )?;
        Ok(())
    }
}

fn name(command: &Command) -> &'static str {
    match command {
        Command::Ingest(_) => "ingest",
        Command::Stats(_) => "stats",
        Command::SynthQbp(_) => "synth-qbp",
        Command::SynthQbc(_) => "synth-qbc",
        Command::Qc(_) => "qc",
        Command::Emit(_) => "emit",
        Command::Subset(_) => "subset",
        Command::Mix(_) => "mix",
        Command::Score(_) => "score",
        Command::Matrix(_) => "matrix",
        Command::Convergence(_) => "convergence",
        Command::EvalSample(_) => "eval-sample",
        Command::ServeReview(_) => "serve-review",
        Command::EvalAggregate(_) => "eval-aggregate",
    }
}

pub async fn run(command: Command, settings: Settings) -> Result<()> {
    let ctx = Ctx {
        settings,
        command: name(&command),
    };
    ctx.write_snapshot(&command)?;
    match &command {
        Command::Ingest(a) => data::ingest(&ctx, a),
        Command::Stats(a) => data::stats(&ctx, a),
        Command::SynthQbp(a) => synth::qbp(&ctx, a).await,
        Command::SynthQbc(a) => synth::qbc(&ctx, a).await,
        Command::Qc(a) => qc::run(&ctx, a),
        Command::Emit(a) => emit::emit(&ctx, a),
        Command::Subset(a) => emit::subset(&ctx, a),
        Command::Mix(a) => emit::mix(&ctx, a),
        Command::Score(a) => eval::score(&ctx, a),
        Command::Matrix(a) => eval::matrix(&ctx, a),
        Command::Convergence(a) => eval::convergence(&ctx, a),
        Command::EvalSample(a) => review::sample(&ctx, a),
        Command::ServeReview(a) => review::serve(&ctx, a).await,
        Command::EvalAggregate(a) => review::aggregate(&ctx, a),
    }
}

/// Splits a `NAME=path` argument.
pub fn named_path(arg: &str, flag: &str) -> Result<(String, PathBuf)> {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => {
            Ok((name.to_string(), PathBuf::from(path)))
        }
        _ => Err(fail("usage", format!("--{flag} expects NAME=PATH, got {arg:?}"))),
    }
}

pub fn write_text(path: &Path, body: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, body).map_err(|e| fail("io", format!("{}: {e}", path.display())))
}
