//! Parameter sweeps: one independent run per value, executed in parallel.

use std::path::Path;

use log::info;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiment::run_experiment;
use crate::output::{write_artifacts, Summary};

/// Configs for each value of `param`. With `runs > 1`, every value is repeated
/// over seeds `seed, seed+1, …`.
pub fn expand(
    base: &ExperimentConfig,
    param: &str,
    values: &[String],
    runs: usize,
) -> Result<Vec<ExperimentConfig>, CliError> {
    let mut out = Vec::new();
    for v in values {
        let cfg = base.with_field(param, v)?;
        for r in 0..runs.max(1) as u64 {
            let mut c = cfg.clone();
            c.seed = cfg.seed + r;
            out.push(c);
        }
    }
    Ok(out)
}

fn label(param: &str, value: &str, seed: u64, runs: usize) -> String {
    let clean: String =
        value.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect();
    if runs > 1 {
        format!("{param}={clean}/seed={seed}")
    } else {
        format!("{param}={clean}")
    }
}

/// Runs the sweep and writes each run's artifacts under `dir`.
pub fn run_sweep(
    base: &ExperimentConfig,
    param: &str,
    values: &[String],
    runs: usize,
    dir: &Path,
) -> Result<Vec<(String, Summary)>, CliError> {
    let configs = expand(base, param, values, runs)?;
    let per_value = runs.max(1);
    configs
        .par_iter()
        .enumerate()
        .map(|(i, cfg)| {
            let name = label(param, &values[i / per_value], cfg.seed, runs);
            info!("sweep run {name}");
            let outcome = run_experiment(cfg)?;
            let summary = write_artifacts(&outcome, &dir.join(&name))?;
            Ok((name, summary))
        })
        .collect()
}
