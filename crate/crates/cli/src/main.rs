use std::io;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use altt_cli::commands::{self, ValidateArgs};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "altt",
    version,
    about = "Adaptive Learn-then-Test hyperparameter certification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One run on the config's synthetic risk model; writes a run directory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `calibration.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo check of the error guarantee. Exits 1 if the estimate
    /// exceeds delta plus its 3-sigma binomial margin.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        /// Base seed for per-trial streams; overrides `base_seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write every trial's rounds to rounds.csv.
        #[arg(long)]
        keep_rounds: bool,
    },
    /// One run against an external oracle speaking newline-delimited JSON.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        /// Shell command starting the oracle.
        #[arg(long)]
        oracle: String,
        /// Per-request timeout in seconds.
        #[arg(long, default_value_t = 60.0)]
        timeout_secs: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tidy per-round CSV of every run directory under `--in`.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo summary for each point of the config's sweep grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let run = commands::simulate(&config, seed, &out)?;
            println!(
                "selected {:?} at round {} ({:?})",
                run.selected.iter().map(|id| id.0).collect::<Vec<_>>(),
                run.stop_round,
                run.stop_reason
            );
        }
        Command::Validate {
            config,
            trials,
            seed,
            out,
            keep_rounds,
        } => {
            let report = commands::validate(ValidateArgs {
                config: &config,
                trials,
                seed,
                out: &out,
                keep_rounds,
            })?;
            println!("{}", commands::verdict(&report));
            if !report.passed {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Calibrate {
            config,
            oracle,
            timeout_secs,
            seed,
            out,
        } => {
            if !(timeout_secs.is_finite() && timeout_secs > 0.0) {
                anyhow::bail!("--timeout-secs must be positive");
            }
            let run = commands::calibrate(
                &config,
                &oracle,
                Duration::from_secs_f64(timeout_secs),
                seed,
                &out,
            )?;
            println!(
                "selected {:?} at round {} ({:?})",
                run.selected.iter().map(|id| id.0).collect::<Vec<_>>(),
                run.stop_round,
                run.stop_reason
            );
        }
        Command::Report { input, out } => match out {
            Some(path) => {
                let file = std::fs::File::create(&path)?;
                commands::report(&input, file)?;
            }
            None => {
                commands::report(&input, io::stdout().lock())?;
            }
        },
        Command::Sweep {
            config,
            trials,
            seed,
            out,
        } => {
            let rows = commands::sweep(&config, trials, seed, &out)?;
            println!(
                "{} sweep points written to {}",
                rows.len(),
                out.join("sweep.csv").display()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
