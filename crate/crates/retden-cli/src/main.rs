//! Command-line driver: runs experiments, emits natural-gradient response
//! curves, checks the closed forms against the quadrature oracle, and
//! re-aggregates existing trial files.

mod commands;
mod config;
mod presets;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Overrides;

#[derive(Parser)]
#[command(
    name = "retden",
    version,
    about = "Return-density estimation and risk-sensitive tabular RL"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded multi-trial experiment and write results, per-trial
    /// statistics, greedy paths, and a replayable manifest.
    Run {
        /// Config file path or bundled preset name (see `presets`).
        #[arg(long)]
        config: String,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of trials.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the number of learning steps per trial.
        #[arg(long)]
        steps: Option<u64>,
        /// Output directory.
        #[arg(long, default_value_os_t = commands::default_out_dir())]
        out: PathBuf,
        /// Worker threads for running trials concurrently.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Tabulate the closed-form natural-gradient components against the
    /// temporal difference and write them as CSV.
    NgCurve {
        /// Density model: gaussian | laplace | skewed_laplace.
        #[arg(long)]
        model: String,
        /// Current parameters, comma separated (defaults: 0,1[,0.5]).
        #[arg(long, allow_hyphen_values = true)]
        params: Option<String>,
        /// Successor (target) parameters, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        target: Option<String>,
        #[arg(long, default_value_t = -5.0, allow_negative_numbers = true)]
        delta_min: f64,
        #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
        delta_max: f64,
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[arg(long, default_value_t = 0.95)]
        discount: f64,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Randomized closed-form-vs-quadrature checks plus the grid
    /// fixed-point consistency check. Exits nonzero on any discrepancy.
    OracleCheck {
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Fault-injection fixture for testing the failure path.
        #[arg(long, hide = true, allow_negative_numbers = true)]
        perturb_laplace_b: Option<f64>,
    },
    /// Re-aggregate an existing trials.csv into the results schema.
    Report {
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the bundled experiment presets.
    Presets,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            seed,
            trials,
            steps,
            out,
            workers,
        } => commands::cmd_run(
            &config,
            Overrides {
                seed,
                trials,
                steps,
            },
            &out,
            workers,
        ),
        Command::NgCurve {
            model,
            params,
            target,
            delta_min,
            delta_max,
            points,
            discount,
            out,
        } => commands::cmd_ng_curve(
            &model,
            params.as_deref(),
            target.as_deref(),
            delta_min,
            delta_max,
            points,
            discount,
            &out,
        ),
        Command::OracleCheck {
            cases,
            seed,
            perturb_laplace_b,
        } => match commands::cmd_oracle_check(cases, seed, perturb_laplace_b) {
            Ok(true) => {
                println!("oracle check passed");
                Ok(())
            }
            Ok(false) => {
                eprintln!("oracle check FAILED");
                return ExitCode::from(1);
            }
            Err(e) => Err(e),
        },
        Command::Report { trials, out } => commands::cmd_report(&trials, &out),
        Command::Presets => {
            for name in presets::preset_names() {
                println!("{name}");
            }
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
