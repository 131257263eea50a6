//! `meshcal`: simulate ranging networks, self-calibrate them and evaluate the results.

mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Self-calibration of fully meshed ranging networks.
///
/// Stages communicate through files: `simulate` writes a dataset, `calibrate`
/// writes per-epoch estimates, `evaluate` and `compare` write metric reports.
#[derive(Debug, Parser)]
#[command(name = "meshcal", version)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with truth and visibility sections.
    Simulate(SimulateArgs),
    /// Run CF and/or PGP over a dataset under one frame configuration.
    Calibrate(CalibrateArgs),
    /// Compute ranging and positioning metrics for one or more result sets.
    Evaluate(EvaluateArgs),
    /// Compare two frame configurations and emit the cross-configuration delta table.
    Compare(CompareArgs),
    /// Run simulate, calibrate (both canned frames) and compare end to end.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
struct OutDir {
    /// Output directory.
    #[arg(long, env = "MESHCAL_OUT_DIR", default_value = "meshcal-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Built-in scenario name (`torgau-like`) or path to a scenario file.
    #[arg(long, default_value = "torgau-like")]
    scenario: String,
    /// Ranging model file; built-in defaults when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Random seed (overrides the model file).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of epochs (overrides the scenario).
    #[arg(long)]
    epochs: Option<usize>,
    /// Number of nodes (overrides the scenario).
    #[arg(long)]
    nodes: Option<usize>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Cf,
    Pgp,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Hypotheses,
    Parametric,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Dataset file.
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    method: Method,
    /// Origin, axis and half-plane node labels, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1, required = true)]
    frame: Vec<String>,
    /// Reference uncertainty propagation for PGP (overrides the params file).
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// PGP parameter file.
    #[arg(long)]
    params: Option<PathBuf>,
    /// CF parameter file.
    #[arg(long)]
    cf_params: Option<PathBuf>,
    /// Epoch indices at which to dump every PGP belief, comma separated.
    #[arg(long, value_delimiter = ',')]
    dump_epochs: Vec<usize>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Per-metric CSV files plus the JSON summary.
    Csv,
    /// JSON summary only.
    Json,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Dataset file the results were computed from.
    dataset: PathBuf,
    /// Result directories written by `calibrate` (repeatable).
    #[arg(long = "results", required = true)]
    results: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Dataset file the results were computed from.
    dataset: PathBuf,
    /// Result directory of the first configuration.
    first: PathBuf,
    /// Result directory of the second configuration.
    second: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[command(flatten)]
    out: OutDir,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let outcome = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Calibrate(a) => commands::calibrate(&a),
        Command::Evaluate(a) => commands::evaluate(&a.dataset, &a.results, a.format, &a.out.out),
        Command::Compare(a) => {
            commands::evaluate(&a.dataset, &[a.first, a.second], a.format, &a.out.out)
        }
        Command::Demo(a) => commands::demo(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
