//! The `calibrate` subcommand: grid-search r1/r2 on labeled overlap
//! records and persist the winning params for `detect --params`.

use std::io::BufRead;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};

use ctcpipe::decision::{calibrate_thresholds, CalibrationRecord};

use crate::CalibrateArgs;

pub fn run(args: CalibrateArgs) -> Result<ExitCode> {
    let file = std::fs::File::open(&args.records)
        .with_context(|| format!("opening records {}", args.records.display()))?;
    let mut records = Vec::new();
    for (number, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CalibrationRecord = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}", args.records.display(), number + 1))?;
        records.push(record);
    }
    if records.is_empty() {
        bail!("{}: no labeled records", args.records.display());
    }

    let calibration = calibrate_thresholds(&records, args.grid_step, args.semantics.into())?;
    std::fs::write(
        &args.output,
        serde_json::to_string_pretty(&calibration.params)?,
    )
    .with_context(|| format!("writing params {}", args.output.display()))?;

    println!(
        "calibrated on {} records: r1={:.2} r2={:.2} F1={:.4} (tp={} fp={} fn={})",
        records.len(),
        calibration.params.r1,
        calibration.params.r2,
        calibration.f1,
        calibration.true_positives,
        calibration.false_positives,
        calibration.false_negatives
    );
    println!("params written to {}", args.output.display());
    Ok(ExitCode::SUCCESS)
}
