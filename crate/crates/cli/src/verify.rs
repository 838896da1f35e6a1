//! Re-accumulates a per-round CSV and checks it against the run summary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;
use crate::output::{Summary, SUMMARY_FILE};

/// Agreement required between re-accumulated and reported totals, relative
/// to `max(1, Σ|loss|)`.
pub const VERIFY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub rounds: usize,
    pub cumulative_loss: f64,
    pub expert_cumulative_loss: Vec<f64>,
    pub regret_best: f64,
    /// Largest gap between recomputed and logged running columns.
    pub max_column_gap: f64,
    /// Largest gap between recomputed totals and the summary.
    pub max_summary_gap: f64,
    pub tolerance: f64,
    pub ok: bool,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, CliError> {
    headers.iter().position(|h| h == name).ok_or_else(|| CliError::Verify(format!("CSV has no `{name}` column")))
}

fn parse(row: &csv::StringRecord, i: usize, line: usize) -> Result<f64, CliError> {
    row[i].trim().parse().map_err(|e| CliError::Verify(format!("row {line}, column {i}: {e}")))
}

/// Sums the `loss` and `xloss_*` columns from scratch and compares the result
/// with the CSV's own running columns and with `summary`.
pub fn verify_csv(csv_path: &Path, summary_path: Option<&Path>) -> Result<VerifyReport, CliError> {
    let summary_path: PathBuf = match summary_path {
        Some(p) => p.to_path_buf(),
        None => csv_path.parent().unwrap_or(Path::new(".")).join(SUMMARY_FILE),
    };
    let text =
        fs::read_to_string(&summary_path).map_err(|e| CliError::Io(format!("{}: {e}", summary_path.display())))?;
    let summary: Summary =
        serde_json::from_str(&text).map_err(|e| CliError::Verify(format!("{}: {e}", summary_path.display())))?;

    let mut rdr = csv::Reader::from_path(csv_path).map_err(|e| CliError::Io(format!("{}: {e}", csv_path.display())))?;
    let headers = rdr.headers().map_err(|e| CliError::Verify(e.to_string()))?.clone();
    let loss_col = column(&headers, "loss")?;
    let cum_col = column(&headers, "cum_loss")?;
    let regret_col = column(&headers, "regret_best")?;
    let expert_cols: Vec<usize> =
        headers.iter().enumerate().filter(|(_, h)| h.starts_with("xloss_")).map(|(i, _)| i).collect();
    if expert_cols.is_empty() {
        return Err(CliError::Verify("CSV has no `xloss_*` columns".into()));
    }

    let mut cum = 0.0;
    let mut abs_total = 0.0;
    let mut experts = vec![0.0; expert_cols.len()];
    let mut column_gap = 0.0_f64;
    let mut rounds = 0;
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| CliError::Verify(format!("row {}: {e}", line + 1)))?;
        let loss = parse(&row, loss_col, line + 1)?;
        cum += loss;
        abs_total += loss.abs();
        for (e, &c) in experts.iter_mut().zip(&expert_cols) {
            *e += parse(&row, c, line + 1)?;
        }
        let best = experts.iter().copied().fold(f64::INFINITY, f64::min);
        column_gap = column_gap
            .max((parse(&row, cum_col, line + 1)? - cum).abs())
            .max((parse(&row, regret_col, line + 1)? - (cum - best)).abs());
        rounds += 1;
    }
    let best = experts.iter().copied().fold(f64::INFINITY, f64::min);
    let regret_best = cum - best;

    if summary.expert_cumulative_loss.len() != experts.len() || summary.horizon != rounds {
        return Err(CliError::Verify(format!(
            "summary describes {} experts over {} rounds, CSV has {} over {rounds}",
            summary.expert_cumulative_loss.len(),
            summary.horizon,
            experts.len()
        )));
    }
    let mut summary_gap = (summary.cumulative_loss - cum).abs().max((summary.regret_best - regret_best).abs());
    for (s, e) in summary.expert_cumulative_loss.iter().zip(&experts) {
        summary_gap = summary_gap.max((s - e).abs());
    }
    let tolerance = VERIFY_TOLERANCE * abs_total.max(1.0);
    Ok(VerifyReport {
        rounds,
        cumulative_loss: cum,
        expert_cumulative_loss: experts,
        regret_best,
        max_column_gap: column_gap,
        max_summary_gap: summary_gap,
        tolerance,
        ok: column_gap <= tolerance && summary_gap <= tolerance,
    })
}
