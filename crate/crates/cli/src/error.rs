use std::fmt;

use qasynth::corpus::CorpusError;
use qasynth::emitter::EmitError;
use qasynth::evalharness::{ConvergenceError, MatrixError};
use qasynth::humaneval::{SamplingError, StoreError};
use qasynth::jsonl::JsonlError;
use qasynth::promptkit::TemplateError;
use qasynth::qualitygate::QcError;
use qasynth::synthgen::{BackendError, JobError, SynthError};

/// An error raised by the CLI itself, with an explicit class.
#[derive(Debug)]
pub struct Failure {
    pub class: &'static str,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub fn fail(class: &'static str, message: impl Into<String>) -> anyhow::Error {
    Failure {
        class,
        message: message.into(),
    }
    .into()
}

/// Short error class for the one-line error report.
pub fn classify(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.class;
        }
        if let Some(e) = cause.downcast_ref::<JsonlError>() {
            return match e {
                JsonlError::Io { .. } => "io",
                JsonlError::Parse { .. } => "parse",
            };
        }
        if cause.is::<CorpusError>() {
            return "corpus";
        }
        if cause.is::<TemplateError>() {
            return "template";
        }
        if cause.is::<JobError>() {
            return "job";
        }
        if cause.is::<SynthError>() {
            return "synth";
        }
        if cause.is::<BackendError>() {
            return "backend";
        }
        if cause.is::<QcError>() {
            return "qc";
        }
        if cause.is::<EmitError>() {
            return "emit";
        }
        if cause.is::<SamplingError>() {
            return "sampling";
        }
        if cause.is::<StoreError>() {
            return "store";
        }
        if cause.is::<MatrixError>() {
            return "matrix";
        }
        if cause.is::<ConvergenceError>() {
            return "convergence";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "runtime"
}

/// Exit status for a failed run: 2 for usage errors, 1 otherwise.
pub fn exit_code(class: &str) -> i32 {
    if class == "usage" {
        2
    } else {
        1
    }
}

/// The error message on one line.
pub fn one_line(err: &anyhow::Error) -> String {
    err.to_string().split_whitespace().collect::<Vec<_>>().join(" ")
}
