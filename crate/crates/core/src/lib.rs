//! Narrative (QBP) and visual-rationale (QBC) supervision synthesis for
//! VideoQA corpora, plus the measurement tooling around it.
//!
//! The pipeline runs in stages that each read and write line-oriented JSON:
//!
//! - [`corpus`]: canonical QA records, per-video question groups, statistics.
//! - [`promptkit`]: locked prompt templates and deterministic rendering.
//! - [`synthgen`]: frame plans, generation backends, caching, resumable jobs.
//! - [`qualitygate`]: automated checks over synthesized text.
//! - [`emitter`]: training-set assembly, scaling subsets and seed mixtures.
//! - [`evalharness`]: exact-match scoring, transfer matrices, convergence.
//! - [`humaneval`]: Likert rating collection and aggregation.

pub mod corpus;
pub mod emitter;
pub mod evalharness;
pub mod hashing;
pub mod humaneval;
pub mod jsonl;
pub mod promptkit;
pub mod qualitygate;
pub mod rng;
pub mod synthgen;
pub mod text;
