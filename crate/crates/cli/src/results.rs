//! Line-delimited results format written by `detect` and consumed by
//! `report`: one JSON object per line, tagged by `type`, with the batch
//! report as the final line.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use ctcpipe::pipeline::{BatchReport, SampleFailure, SampleRecord, SampleResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ResultLine {
    Sample(SampleResult),
    Error(SampleFailure),
    Report(BatchReport),
}

pub fn write_results(
    path: &Path,
    records: &[SampleRecord],
    report: Option<&BatchReport>,
) -> Result<()> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating results file {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for record in records {
        let line = match record {
            SampleRecord::Completed(r) => ResultLine::Sample(r.clone()),
            SampleRecord::Failed(f) => ResultLine::Error(f.clone()),
        };
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
    }
    if let Some(report) = report {
        writeln!(out, "{}", serde_json::to_string(&ResultLine::Report(report.clone()))?)?;
    }
    out.flush()?;
    Ok(())
}

/// Parsed results file; corrupt lines are collected, not fatal.
#[derive(Debug, Default)]
pub struct ParsedResults {
    pub samples: Vec<SampleResult>,
    pub errors: Vec<SampleFailure>,
    pub report: Option<BatchReport>,
    /// 1-based line numbers that failed to parse.
    pub corrupt_lines: Vec<usize>,
}

pub fn read_results(path: &Path) -> Result<ParsedResults> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("opening results file {}", path.display()))?;
    let mut parsed = ParsedResults::default();
    for (number, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading line {}", number + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ResultLine>(&line) {
            Ok(ResultLine::Sample(s)) => parsed.samples.push(s),
            Ok(ResultLine::Error(e)) => parsed.errors.push(e),
            Ok(ResultLine::Report(r)) => parsed.report = Some(r),
            Err(_) => parsed.corrupt_lines.push(number + 1),
        }
    }
    Ok(parsed)
}
