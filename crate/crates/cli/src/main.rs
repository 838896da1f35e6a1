use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;
use optidelay_cli::output::{output_dir, write_artifacts};
use optidelay_cli::sweep::run_sweep;
use optidelay_cli::verify::verify_csv;
use optidelay_cli::{run_experiment, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "optidelay", version, about = "Delayed-feedback online learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write rounds.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one experiment per value of a config field.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        /// Seeds per value, starting from the config's seed.
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-accumulate a rounds.csv and compare it with its summary.json.
    Verify {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output = Some(o);
            }
            let outcome = run_experiment(&cfg)?;
            let dir = output_dir(&cfg);
            let summary = write_artifacts(&outcome, &dir)?;
            println!("regret_best={} certified={} out={}", summary.regret_best, summary.certified, dir.display());
            Ok(summary.certified)
        }
        Command::Sweep { config, param, values, runs, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = out.unwrap_or_else(|| output_dir(&cfg));
            let results = run_sweep(&cfg, &param, &values, runs, &dir)?;
            let mut all = true;
            for (name, s) in &results {
                println!("{name}\tregret_best={}\tcertified={}", s.regret_best, s.certified);
                all &= s.certified;
            }
            Ok(all)
        }
        Command::Verify { csv, summary } => {
            let report = verify_csv(&csv, summary.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(report.ok)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("POOL_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
