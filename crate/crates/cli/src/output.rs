//! Per-round CSV and summary JSON.

use std::fs;
use std::io::Write;
use std::path::Path;

use optidelay::envlab::write_stream_csv;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, LearnerKind};
use crate::error::CliError;
use crate::experiment::{linear_stream, CertificateCheck, Outcome};

pub const ROUNDS_FILE: &str = "rounds.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const STREAM_FILE: &str = "stream.csv";

/// Formats `x` rounded to 12 significant digits, in the shortest form that
/// reads back to the rounded value.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("scientific notation parses");
    if (1e-5..1e15).contains(&rounded.abs()) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub learner: LearnerKind,
    pub d: usize,
    pub horizon: usize,
    pub seed: u64,
    pub max_delay: usize,
    pub q: Option<f64>,
    pub alpha: Option<f64>,
    pub cumulative_loss: f64,
    pub expert_cumulative_loss: Vec<f64>,
    pub regret_vs_expert: Vec<f64>,
    pub best_expert: usize,
    pub regret_best: f64,
    pub final_lambda: f64,
    pub delta_sum: f64,
    pub certificates: Vec<CertificateCheck>,
    pub certified: bool,
}

impl Summary {
    pub fn from_outcome(o: &Outcome) -> Self {
        let r = &o.record;
        Self {
            learner: o.config.learner,
            d: o.config.d,
            horizon: o.config.horizon,
            seed: o.config.seed,
            max_delay: o.max_delay,
            q: o.q,
            alpha: o.alpha,
            cumulative_loss: r.cumulative_loss,
            expert_cumulative_loss: r.expert_cumulative_loss.clone(),
            regret_vs_expert: r.regret_vs_expert.clone(),
            best_expert: r.best_expert,
            regret_best: r.regret_best,
            final_lambda: o.history.lambdas.last().copied().unwrap_or(0.0),
            delta_sum: o.history.deltas.iter().sum(),
            certificates: o.certificates.clone(),
            certified: o.certified(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes") + "\n"
    }
}

/// Header of the per-round CSV for `d` experts and `m` learned hinters.
pub fn csv_header(d: usize, m: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "loss", "cum_loss", "regret_best", "lambda", "delta", "b_t", "a_t"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..d).map(|j| format!("w_{j}")));
    h.extend((0..m).map(|j| format!("omega_{j}")));
    h.extend((0..d).map(|j| format!("xloss_{j}")));
    h
}

/// Writes the per-round trace: loss, running regret against the best expert,
/// λ, δ (AdaHedgeD only), bound terms, plays, hinter weights, and each
/// expert's loss.
pub fn emit_csv<W: Write>(o: &Outcome, writer: W) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(e.to_string());
    let hist = &o.history;
    let m = o.omegas.as_ref().and_then(|w| w.first()).map_or(0, |w| w.dim());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(csv_header(hist.d, m)).map_err(io)?;
    for t in 1..=hist.horizon() {
        let i = t - 1;
        let mut row = vec![t.to_string()];
        row.push(fmt_sig(hist.losses[i]));
        row.push(fmt_sig(o.record.cumulative_loss_by_round[i]));
        row.push(fmt_sig(o.record.regret_best_by_round[i]));
        row.push(fmt_sig(hist.lambdas[i]));
        row.push(fmt_sig(hist.deltas.get(i).copied().unwrap_or(0.0)));
        row.push(fmt_sig(o.bounds[i].b));
        row.push(fmt_sig(o.bounds[i].a));
        row.extend(hist.plays[i].as_slice().iter().map(|x| fmt_sig(*x)));
        if let Some(omegas) = &o.omegas {
            row.extend(omegas[i].as_slice().iter().map(|x| fmt_sig(*x)));
        }
        row.extend(hist.expert_losses[i].iter().map(|x| fmt_sig(*x)));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

/// Writes `rounds.csv`, `summary.json`, the resolved `config.json`, and for
/// linear environments `stream.csv`.
pub fn write_artifacts(o: &Outcome, dir: &Path) -> Result<Summary, CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    let mut buf = Vec::new();
    emit_csv(o, &mut buf)?;
    fs::write(dir.join(ROUNDS_FILE), buf).map_err(io)?;
    let summary = Summary::from_outcome(o);
    fs::write(dir.join(SUMMARY_FILE), summary.to_json()).map_err(io)?;
    let config = serde_json::to_string_pretty(&o.config).expect("config serializes") + "\n";
    fs::write(dir.join("config.json"), config).map_err(io)?;
    if let Some(stream) = linear_stream(&o.config)? {
        let mut buf = Vec::new();
        write_stream_csv(&stream, &mut buf)?;
        fs::write(dir.join(STREAM_FILE), buf).map_err(io)?;
    }
    Ok(summary)
}

/// Output directory for a config, defaulting to `out/`.
pub fn output_dir(cfg: &ExperimentConfig) -> std::path::PathBuf {
    cfg.output.clone().unwrap_or_else(|| "out".into())
}
