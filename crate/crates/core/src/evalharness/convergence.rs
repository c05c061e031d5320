use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const DEFAULT_WINDOW: usize = 3;
/// Accuracy points below the final smoothed value that still count as
/// having reached the plateau.
pub const DEFAULT_DELTA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub step: u64,
    pub accuracy: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ConvergenceError {
    #[error("series is empty")]
    Empty,
    #[error("series has {got} points but the smoothing window is {window}")]
    TooShort { got: usize, window: usize },
    #[error("smoothing window must be at least 1")]
    ZeroWindow,
    #[error("steps must be strictly increasing (step {step} follows {previous})")]
    NonIncreasing { previous: u64, step: u64 },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("unknown series {0:?}")]
    UnknownSeries(String),
}

/// Parses `step,accuracy` lines. Blank lines, `#` comments and a leading
/// `step,accuracy` header are skipped.
pub fn parse_training_log(body: &str) -> Result<Vec<ConvergencePoint>, ConvergenceError> {
    let mut out = Vec::new();
    for (idx, raw) in body.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if out.is_empty() && line.eq_ignore_ascii_case("step,accuracy") {
            continue;
        }
        let parse_err = |reason: String| ConvergenceError::Parse {
            line: idx + 1,
            reason,
        };
        let (step, acc) = line
            .split_once(',')
            .ok_or_else(|| parse_err("expected `step,accuracy`".into()))?;
        let step = step
            .trim()
            .parse::<u64>()
            .map_err(|e| parse_err(format!("step: {e}")))?;
        let accuracy = acc
            .trim()
            .parse::<f64>()
            .map_err(|e| parse_err(format!("accuracy: {e}")))?;
        if !accuracy.is_finite() {
            return Err(parse_err("accuracy is not finite".into()));
        }
        out.push(ConvergencePoint { step, accuracy });
    }
    Ok(out)
}

pub fn read_training_log(path: &Path) -> Result<Vec<ConvergencePoint>, ConvergenceError> {
    parse_training_log(&std::fs::read_to_string(path)?)
}

/// Centered moving average; windows are truncated at the series edges.
/// An even window leans one point to the right.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let left = (window.saturating_sub(1)) / 2;
    let right = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right).min(values.len() - 1);
            let slice = &values[lo..=hi];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

fn validate(series: &[ConvergencePoint], window: usize) -> Result<(), ConvergenceError> {
    if window == 0 {
        return Err(ConvergenceError::ZeroWindow);
    }
    if series.is_empty() {
        return Err(ConvergenceError::Empty);
    }
    if series.len() < window {
        return Err(ConvergenceError::TooShort {
            got: series.len(),
            window,
        });
    }
    for w in series.windows(2) {
        if w[1].step <= w[0].step {
            return Err(ConvergenceError::NonIncreasing {
                previous: w[0].step,
                step: w[1].step,
            });
        }
    }
    Ok(())
}

/// First step whose smoothed accuracy is within `delta` of the final
/// smoothed accuracy.
pub fn find_plateau(
    series: &[ConvergencePoint],
    window: usize,
    delta: f64,
) -> Result<u64, ConvergenceError> {
    Ok(summarize(series, window, delta)?.plateau_step)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub plateau_step: u64,
    pub final_accuracy: f64,
}

fn summarize(
    series: &[ConvergencePoint],
    window: usize,
    delta: f64,
) -> Result<SeriesSummary, ConvergenceError> {
    validate(series, window)?;
    let values: Vec<f64> = series.iter().map(|p| p.accuracy).collect();
    let smoothed = smooth(&values, window);
    let final_value = *smoothed.last().expect("validated non-empty");
    let threshold = final_value - delta;
    let idx = smoothed
        .iter()
        .position(|&v| v >= threshold)
        .expect("the final point always meets its own threshold");
    Ok(SeriesSummary {
        plateau_step: series[idx].step,
        final_accuracy: final_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub smoothing_window: usize,
    pub delta: f64,
    pub series: BTreeMap<String, SeriesSummary>,
    pub baseline: Option<String>,
    pub target: Option<String>,
    /// `plateau(baseline) / plateau(target)`.
    pub speedup: Option<f64>,
}

/// Summarizes every named series and, when both names are given, the
/// speedup of `target` over `baseline`.
pub fn analyze_convergence(
    series: &BTreeMap<String, Vec<ConvergencePoint>>,
    window: usize,
    delta: f64,
    baseline: Option<&str>,
    target: Option<&str>,
) -> Result<ConvergenceReport, ConvergenceError> {
    let mut summaries = BTreeMap::new();
    for (name, points) in series {
        summaries.insert(name.clone(), summarize(points, window, delta)?);
    }
    let lookup = |name: &str| {
        summaries
            .get(name)
            .ok_or_else(|| ConvergenceError::UnknownSeries(name.to_string()))
    };
    let speedup = match (baseline, target) {
        (Some(b), Some(t)) => {
            let b = lookup(b)?.plateau_step as f64;
            let t = lookup(t)?.plateau_step as f64;
            (t > 0.0).then(|| b / t)
        }
        _ => None,
    };
    Ok(ConvergenceReport {
        smoothing_window: window,
        delta,
        series: summaries,
        baseline: baseline.map(str::to_string),
        target: target.map(str::to_string),
        speedup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(raw: &[(u64, f64)]) -> Vec<ConvergencePoint> {
        raw.iter()
            .map(|&(step, accuracy)| ConvergencePoint { step, accuracy })
            .collect()
    }

    #[test]
    fn monotone_series_without_smoothing() {
        let s = pts(&[(100, 70.0), (200, 75.0), (300, 75.1), (400, 75.2)]);
        assert_eq!(find_plateau(&s, 1, 0.5).unwrap(), 200);
    }

    #[test]
    fn monotone_series_with_default_window() {
        // Smoothed: 72.5, 73.37, 75.1, 75.15 -> threshold 74.65.
        let s = pts(&[(100, 70.0), (200, 75.0), (300, 75.1), (400, 75.2)]);
        assert_eq!(find_plateau(&s, DEFAULT_WINDOW, DEFAULT_DELTA).unwrap(), 300);
    }

    #[test]
    fn constant_series_plateaus_immediately() {
        let s = pts(&[(10, 50.0), (20, 50.0), (30, 50.0), (40, 50.0)]);
        assert_eq!(find_plateau(&s, 3, 0.5).unwrap(), 10);
    }

    #[test]
    fn errors() {
        assert!(matches!(find_plateau(&[], 3, 0.5), Err(ConvergenceError::Empty)));
        let two = pts(&[(1, 1.0), (2, 2.0)]);
        assert!(matches!(
            find_plateau(&two, 3, 0.5),
            Err(ConvergenceError::TooShort { .. })
        ));
        let back = pts(&[(2, 1.0), (1, 2.0), (3, 3.0)]);
        assert!(matches!(
            find_plateau(&back, 1, 0.5),
            Err(ConvergenceError::NonIncreasing { .. })
        ));
        assert!(matches!(find_plateau(&back, 0, 0.5), Err(ConvergenceError::ZeroWindow)));
    }

    #[test]
    fn smoothing_truncates_edges() {
        assert_eq!(smooth(&[1.0, 2.0, 3.0, 4.0], 3), vec![1.5, 2.0, 3.0, 3.5]);
        assert_eq!(smooth(&[1.0, 2.0], 1), vec![1.0, 2.0]);
    }

    #[test]
    fn parses_logs() {
        let pts = parse_training_log("step,accuracy\n# run 1\n10,50.5\n\n20, 61\n").unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1].step, 20);
        assert!(matches!(
            parse_training_log("10;50"),
            Err(ConvergenceError::Parse { line: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn larger_delta_never_later(
            accs in prop::collection::vec(0.0f64..100.0, 3..40),
            d1 in 0.0f64..10.0,
            extra in 0.0f64..10.0,
        ) {
            let series: Vec<_> = accs.iter().enumerate()
                .map(|(i, &a)| ConvergencePoint { step: (i as u64 + 1) * 10, accuracy: a })
                .collect();
            let small = find_plateau(&series, 3, d1).unwrap();
            let large = find_plateau(&series, 3, d1 + extra).unwrap();
            prop_assert!(large <= small);
            prop_assert!(series.iter().any(|p| p.step == small));
        }
    }
}
