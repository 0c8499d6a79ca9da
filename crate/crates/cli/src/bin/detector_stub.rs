//! Reference external detector for the stdin/stdout line protocol.
//!
//! Answers every request line with the classical backend's detections for
//! the requested stage, so a pipeline bound to this process must agree
//! with the in-process classical pipeline exactly. Useful as a template
//! when wiring a real (e.g. neural) backend in another language, and as
//! the counterparty in the wire-protocol tests.

use std::io::{BufRead, Write};
use std::process::ExitCode;

use clap::Parser;

use ctcpipe::detector::{decode_request, encode_reply, DetectorStage};
use ctcpipe::segment::{
    detect_ck_classical, detect_dapi_classical, ClassicalDetectorConfig, SizeFilter,
};

#[derive(Parser)]
#[command(name = "detector-stub", about = "classical detector behind the wire protocol")]
struct Args {
    #[arg(long, default_value_t = 0.9)]
    dapi_score_threshold: f64,
    #[arg(long)]
    microns_per_pixel: Option<f64>,
    #[arg(long, default_value_t = 5.0)]
    min_diameter_um: f64,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = ClassicalDetectorConfig {
        size_filter: SizeFilter {
            min_diameter_um: args.min_diameter_um,
            microns_per_pixel: args.microns_per_pixel,
        },
        dapi_score_threshold: args.dapi_score_threshold,
    };

    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    for line in stdin.lock().lines() {
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                eprintln!("detector-stub: stdin: {e}");
                return ExitCode::from(1);
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        let (stage, img) = match decode_request(&line) {
            Ok(parsed) => parsed,
            Err(e) => {
                eprintln!("detector-stub: {e}");
                return ExitCode::from(1);
            }
        };
        let detections = match stage {
            DetectorStage::Stage1Ck => detect_ck_classical(&img, &cfg),
            DetectorStage::Stage2Dapi => detect_dapi_classical(&img, &cfg),
        };
        if writeln!(stdout, "{}", encode_reply(&detections)).and_then(|_| stdout.flush()).is_err() {
            return ExitCode::from(1);
        }
    }
    ExitCode::SUCCESS
}
