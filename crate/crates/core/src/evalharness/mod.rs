//! Exact-match scoring, cross-dataset transfer matrices and convergence
//! analysis over training logs.

mod convergence;
mod matrix;
mod normalize;
mod score;

pub use convergence::{
    analyze_convergence, find_plateau, parse_training_log, read_training_log, smooth,
    ConvergenceError, ConvergencePoint, ConvergenceReport, SeriesSummary, DEFAULT_DELTA,
    DEFAULT_WINDOW,
};
pub use matrix::{transfer_matrix, MatrixCell, MatrixError, TransferMatrix, GAP_MARKER};
pub use normalize::{normalize, normalize_answer, NORMALIZATION_RULES};
pub use score::{
    resolve_option, score, AccuracyReport, MatchMode, OptionResolution, PredictionRecord,
    ScoreTally, TypeAccuracy,
};
