use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::AccuracyReport;

#[derive(Debug, thiserror::Error)]
pub enum MatrixError {
    #[error("baseline row {0:?} is not among the train sources")]
    UnknownBaseline(String),
    #[error("duplicate cell for train={train:?} test={test:?}")]
    DuplicateCell { train: String, test: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub accuracy: f64,
    pub n: usize,
    pub correct: usize,
    /// Accuracy minus the baseline row's accuracy in the same column.
    pub delta: Option<f64>,
}

/// Train sources as rows, test targets as columns. Missing cells are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub train_sources: Vec<String>,
    pub test_targets: Vec<String>,
    pub baseline: Option<String>,
    pub cells: Vec<Vec<Option<MatrixCell>>>,
    /// Mean accuracy over the present cells of each row.
    pub row_means: Vec<Option<f64>>,
    /// Mean accuracy over the present cells of each column.
    pub column_means: Vec<Option<f64>>,
    /// Pooled accuracy (sum correct / sum n) of each row.
    pub row_pooled: Vec<Option<f64>>,
}

pub const GAP_MARKER: &str = "-";

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Lays out accuracy reports as a train-source by test-target grid. Rows and
/// columns follow first appearance in `cells`.
pub fn transfer_matrix(
    cells: &[AccuracyReport],
    baseline: Option<&str>,
) -> Result<TransferMatrix, MatrixError> {
    let mut rows: Vec<String> = Vec::new();
    let mut cols: Vec<String> = Vec::new();
    for c in cells {
        if !rows.contains(&c.train_source) {
            rows.push(c.train_source.clone());
        }
        if !cols.contains(&c.test_target) {
            cols.push(c.test_target.clone());
        }
    }
    let baseline_row = match baseline {
        Some(b) => Some(
            rows.iter()
                .position(|r| r == b)
                .ok_or_else(|| MatrixError::UnknownBaseline(b.to_string()))?,
        ),
        None => None,
    };

    let mut by_key: HashMap<(&str, &str), &AccuracyReport> = HashMap::new();
    for c in cells {
        if by_key
            .insert((c.train_source.as_str(), c.test_target.as_str()), c)
            .is_some()
        {
            return Err(MatrixError::DuplicateCell {
                train: c.train_source.clone(),
                test: c.test_target.clone(),
            });
        }
    }

    let mut grid: Vec<Vec<Option<MatrixCell>>> = rows
        .iter()
        .map(|r| {
            cols.iter()
                .map(|c| {
                    by_key.get(&(r.as_str(), c.as_str())).map(|rep| MatrixCell {
                        accuracy: rep.accuracy,
                        n: rep.n,
                        correct: rep.correct,
                        delta: None,
                    })
                })
                .collect()
        })
        .collect();

    if let Some(b) = baseline_row {
        let base: Vec<Option<f64>> = grid[b]
            .iter()
            .map(|c| c.as_ref().map(|c| c.accuracy))
            .collect();
        for (i, row) in grid.iter_mut().enumerate() {
            if i == b {
                continue;
            }
            for (cell, base) in row.iter_mut().zip(&base) {
                if let (Some(cell), Some(base)) = (cell.as_mut(), base) {
                    cell.delta = Some(cell.accuracy - base);
                }
            }
        }
    }

    let row_means = grid
        .iter()
        .map(|row| mean(row.iter().flatten().map(|c| c.accuracy)))
        .collect();
    let column_means = (0..cols.len())
        .map(|j| mean(grid.iter().filter_map(|row| row[j].as_ref()).map(|c| c.accuracy)))
        .collect();
    let row_pooled = grid
        .iter()
        .map(|row| {
            let (n, correct) = row
                .iter()
                .flatten()
                .fold((0, 0), |(n, k), c| (n + c.n, k + c.correct));
            (n > 0).then(|| 100.0 * correct as f64 / n as f64)
        })
        .collect();

    Ok(TransferMatrix {
        train_sources: rows,
        test_targets: cols,
        baseline: baseline.map(str::to_string),
        cells: grid,
        row_means,
        column_means,
        row_pooled,
    })
}

fn fmt_cell(cell: &Option<MatrixCell>) -> String {
    match cell {
        None => GAP_MARKER.to_string(),
        Some(c) => match c.delta {
            Some(d) => format!("{:.1} ({:+.1})", c.accuracy, d),
            None => format!("{:.1}", c.accuracy),
        },
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| GAP_MARKER.to_string(), |v| format!("{v:.2}"))
}

impl TransferMatrix {
    /// Aligned plain-text table with a trailing mean column and mean row.
    pub fn render_text(&self) -> String {
        let mut table: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["train \\ test".to_string()];
        header.extend(self.test_targets.iter().cloned());
        header.push("mean".into());
        table.push(header);
        for (i, r) in self.train_sources.iter().enumerate() {
            let mut row = vec![r.clone()];
            row.extend(self.cells[i].iter().map(fmt_cell));
            row.push(fmt_opt(self.row_means[i]));
            table.push(row);
        }
        let mut footer = vec!["mean".to_string()];
        footer.extend(self.column_means.iter().map(|m| fmt_opt(*m)));
        footer.push(String::new());
        table.push(footer);

        let widths: Vec<usize> = (0..table[0].len())
            .map(|j| table.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &table {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("train_source,test_target,accuracy,n,correct,delta\n");
        for (i, r) in self.train_sources.iter().enumerate() {
            for (j, c) in self.test_targets.iter().enumerate() {
                match &self.cells[i][j] {
                    Some(cell) => {
                        let delta = cell.delta.map(|d| format!("{d:.4}")).unwrap_or_default();
                        let _ = writeln!(
                            out,
                            "{r},{c},{:.4},{},{},{delta}",
                            cell.accuracy, cell.n, cell.correct
                        );
                    }
                    None => {
                        let _ = writeln!(out, "{r},{c},{GAP_MARKER},,,");
                    }
                }
            }
        }
        out
    }
}
