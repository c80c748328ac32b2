use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use gggp::data::GenderFilter;
use gggp_cli::commands::{self, EvaluateArgs};
use gggp_cli::CliError;

/// Grammar-guided genetic programming for symbolic regression.
#[derive(Parser)]
#[command(name = "gggp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configuration of an experiment spec and write per-run
    /// result and convergence-log files.
    Run {
        /// Experiment spec file (key = value format, one [config NAME]
        /// section per run configuration).
        spec: PathBuf,
    },
    /// Evaluate a stored canonical-expression model against a CSV dataset.
    Evaluate {
        /// Model file holding one canonical expression (# comments allowed).
        model: PathBuf,
        /// Dataset CSV with a header row.
        csv: PathBuf,
        /// Target column.
        #[arg(long, default_value = "DXDTOPF")]
        target: String,
        /// Report per split side instead of the whole dataset; the value is
        /// the training fraction.
        #[arg(long)]
        split: Option<f64>,
        /// Seed for the split shuffle.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Gender subset: all, male or female.
        #[arg(long, default_value = "all")]
        gender: String,
        /// Drop rows younger than this before evaluating.
        #[arg(long)]
        min_age: Option<f64>,
        /// Column whose value 1 marks pregnancy; such rows are dropped.
        #[arg(long)]
        pregnancy_column: Option<String>,
    },
    /// Summarize a results directory: best replicate per configuration,
    /// paired train/test rows sorted by training RMSE.
    Summarize {
        /// Directory holding .result files from `run`.
        dir: PathBuf,
    },
    /// Pool per-replicate convergence logs into the long-format CSV behind
    /// convergence plots.
    Convergence {
        /// Directory holding .log.csv files from `run`.
        dir: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { spec } => commands::cmd_run(&spec),
        Command::Evaluate {
            model,
            csv,
            target,
            split,
            seed,
            gender,
            min_age,
            pregnancy_column,
        } => {
            let gender = GenderFilter::parse(&gender)
                .ok_or_else(|| CliError::spec("gender must be all, male or female"))?;
            if let Some(fraction) = split {
                if !(fraction > 0.0 && fraction < 1.0) {
                    return Err(CliError::spec("--split must lie strictly between 0 and 1"));
                }
            }
            commands::cmd_evaluate(&EvaluateArgs {
                model,
                csv,
                target,
                split,
                seed,
                gender,
                min_age,
                pregnancy_column,
            })
        }
        Command::Summarize { dir } => commands::cmd_summarize(&dir),
        Command::Convergence { dir } => commands::cmd_convergence(&dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
