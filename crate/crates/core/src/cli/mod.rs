//! Command-line interface.
//!
//! Exit status is 0 when every window or repetition produced a result, 1 on
//! an error that stopped the run and 3 when the run finished but some jobs
//! failed. In the last two cases a JSON report goes to stderr.

mod commands;
mod config;
mod output;

pub use commands::{
    cmd_compare, cmd_fit, cmd_forecast, cmd_preprocess, cmd_stability, load_observations, preprocess_summary,
    CommandReport, CompareCell, FitOutput, JobFailure,
};
pub use config::{parse_custom_bounds, BoundsPreset, RunArgs, RunConfig, Threads, DEFAULT_HORIZON, DEFAULT_REPETITIONS};

use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_PARTIAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "episwarm", version, about = "Window-wise SIRD calibration with a particle swarm")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a cumulative-count CSV into daily compartments
    Preprocess {
        /// Input CSV with columns date,confirmed,recovered,deaths
        #[arg(long)]
        input: PathBuf,
        /// Output CSV [default: stdout]
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit every window and write fits.json plus per-day envelopes
    Fit(RunArgs),
    /// Mean R^2(D) for all objectives under both bound presets
    Compare(RunArgs),
    /// Fit one window and extend it into a forecast
    Forecast {
        #[command(flatten)]
        run: RunArgs,
        /// First day of the window (YYYY-MM-DD)
        #[arg(long)]
        window_start: NaiveDate,
    },
    /// Repeat the fit of one window and summarize the spread
    Stability {
        #[command(flatten)]
        run: RunArgs,
        /// First day of the window (YYYY-MM-DD)
        #[arg(long)]
        window_start: NaiveDate,
    },
}

#[derive(Debug, Serialize)]
struct ErrorReport<'a> {
    status: &'static str,
    message: String,
    failures: &'a [JobFailure],
}

pub fn run(cli: &Cli) -> anyhow::Result<CommandReport> {
    match &cli.command {
        Command::Preprocess { input, output } => {
            let r = cmd_preprocess(input, output.as_deref())?;
            Ok(CommandReport {
                written: output.iter().cloned().collect(),
                notes: vec![preprocess_summary(&r)],
                ..CommandReport::default()
            })
        }
        Command::Fit(args) => Ok(cmd_fit(&RunConfig::resolve(args)?)?.report),
        Command::Compare(args) => Ok(cmd_compare(&RunConfig::resolve(args)?)?.1),
        Command::Forecast { run, window_start } => cmd_forecast(&RunConfig::resolve(run)?, *window_start),
        Command::Stability { run, window_start } => cmd_stability(&RunConfig::resolve(run)?, *window_start),
    }
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    // Preprocess may be writing its CSV to stdout; keep chatter off it.
    let to_stderr = matches!(&cli.command, Command::Preprocess { output: None, .. });
    let say = |line: String| {
        if to_stderr {
            eprintln!("{line}");
        } else {
            println!("{line}");
        }
    };
    match run(&cli) {
        Ok(report) => {
            for path in &report.written {
                say(format!("wrote {}", path.display()));
            }
            for note in &report.notes {
                say(note.clone());
            }
            if report.failures.is_empty() {
                EXIT_OK
            } else {
                let msg = format!("{} job(s) failed", report.failures.len());
                emit_error("partial", msg, &report.failures);
                EXIT_PARTIAL
            }
        }
        Err(e) => {
            emit_error("error", format!("{e:#}"), &[]);
            EXIT_ERROR
        }
    }
}

fn emit_error(status: &'static str, message: String, failures: &[JobFailure]) {
    let report = ErrorReport { status, message, failures };
    match serde_json::to_string(&report) {
        Ok(json) => eprintln!("{json}"),
        Err(_) => eprintln!("{}", report.message),
    }
}
