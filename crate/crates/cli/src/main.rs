//! `ctcpipe` — batch CTC detection over directories of multi-channel
//! samples, plus dataset generation, threshold calibration and result
//! reporting.
//!
//! Exit codes: 0 clean, 1 fatal (config/i-o), 2 finished with per-sample
//! errors. Set `CTCPIPE_LOG=debug` for pipeline logging.

mod calibrate;
mod config;
mod detect;
mod generate;
mod report;
mod results;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ctcpipe::decision::Semantics;

#[derive(Parser)]
#[command(name = "ctcpipe", version, about = "3-stage CTC detection pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline over a directory of sample subdirectories.
    Detect(DetectArgs),
    /// Grid-search r1/r2 against labeled overlap records.
    Calibrate(CalibrateArgs),
    /// Generate a synthetic dataset with ground-truth labels.
    Generate(GenerateArgs),
    /// Summarize a results file.
    Report(ReportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SemanticsArg {
    Exclusionary,
    PaperLiteral,
}

impl From<SemanticsArg> for Semantics {
    fn from(value: SemanticsArg) -> Self {
        match value {
            SemanticsArg::Exclusionary => Semantics::Exclusionary,
            SemanticsArg::PaperLiteral => Semantics::PaperLiteral,
        }
    }
}

#[derive(Args)]
struct DetectArgs {
    /// Directory of sample subdirectories (ck.png/dapi.png/cd45.png each).
    #[arg(long)]
    input: PathBuf,
    /// Results file to write (one JSON line per sample + final report).
    #[arg(long)]
    output: PathBuf,
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Calibrated decision params file (overrides the config's r1/r2/semantics).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Worker threads; 0 means one per CPU.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    r1: Option<f64>,
    #[arg(long)]
    r2: Option<f64>,
    #[arg(long, value_enum)]
    semantics: Option<SemanticsArg>,
    /// Pixel pitch; enables the 5 um minimum-diameter filter.
    #[arg(long)]
    microns_per_pixel: Option<f64>,
    #[arg(long)]
    crop_padding: Option<u32>,
    /// Ignore manifest.json labels even when present.
    #[arg(long)]
    ignore_labels: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    /// JSONL file of {p_ck_given_c, p_cd45_given_c, label} records.
    #[arg(long)]
    records: PathBuf,
    /// Where to write the calibrated params JSON.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    grid_step: f64,
    #[arg(long, value_enum, default_value = "exclusionary")]
    semantics: SemanticsArg,
}

#[derive(Args)]
struct GenerateArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Named batch shape.
    #[arg(long, conflicts_with = "spec")]
    preset: Option<String>,
    /// Batch spec JSON file.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Override the batch seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    r1: Option<f64>,
    #[arg(long)]
    r2: Option<f64>,
    #[arg(long, value_enum)]
    semantics: Option<SemanticsArg>,
}

#[derive(Args)]
struct ReportArgs {
    /// Results file written by `detect`.
    #[arg(long)]
    results: PathBuf,
    /// How many of the most confident verdicts to list.
    #[arg(long, default_value_t = 5)]
    top: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("CTCPIPE_LOG")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Detect(args) => detect::run(args),
        Command::Calibrate(args) => calibrate::run(args),
        Command::Generate(args) => generate::run(args),
        Command::Report(args) => report::run(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
