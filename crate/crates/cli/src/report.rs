//! The `report` subcommand: human-readable summary of a results file.
//! Counts are recomputed from the sample lines; the embedded report line
//! is cross-checked rather than trusted.

use std::process::ExitCode;

use anyhow::Result;

use ctcpipe::pipeline::evaluate_batch;

use crate::results::read_results;
use crate::ReportArgs;

pub fn run(args: ReportArgs) -> Result<ExitCode> {
    let parsed = read_results(&args.results)?;
    for line in &parsed.corrupt_lines {
        eprintln!("warning: {}:{line}: unparsable line skipped", args.results.display());
    }
    if parsed.samples.is_empty() && parsed.errors.is_empty() {
        println!("0 samples");
        return Ok(ExitCode::SUCCESS);
    }

    let recomputed = if parsed.samples.is_empty() {
        None
    } else {
        Some(evaluate_batch(&parsed.samples, None)?)
    };
    if let Some(recomputed) = &recomputed {
        println!(
            "{} samples: {} no-CK, {} no-DAPI, {} evaluated",
            recomputed.n_samples, recomputed.n_no_ck, recomputed.n_no_dapi, recomputed.n_evaluated
        );
        println!(
            "predicted: {} positive, {} negative",
            recomputed.n_predicted_positive, recomputed.n_predicted_negative
        );
        if let Some(stored) = &parsed.report {
            let counts_match = (
                stored.n_samples,
                stored.n_no_ck,
                stored.n_no_dapi,
                stored.n_evaluated,
                stored.n_predicted_positive,
            ) == (
                recomputed.n_samples,
                recomputed.n_no_ck,
                recomputed.n_no_dapi,
                recomputed.n_evaluated,
                recomputed.n_predicted_positive,
            );
            if !counts_match {
                eprintln!("warning: stored report disagrees with the sample lines; showing recomputed counts");
            }
            // Accuracy needs the labels, which only the detect run had;
            // percentages are re-derived from the stored ratios.
            if let Some(acc) = stored.accuracy {
                println!("accuracy {:.2}%", acc * 100.0);
            }
            if let Some(acc) = stored.stage3_accuracy {
                println!("stage-3 accuracy {:.2}%", acc * 100.0);
            }
        }
    }
    if !parsed.errors.is_empty() {
        println!("{} samples in the error bucket:", parsed.errors.len());
        for failure in &parsed.errors {
            println!("  {failure}");
        }
    }

    // Most confident verdicts across the batch.
    let mut verdicts: Vec<(String, &ctcpipe::Verdict)> = parsed
        .samples
        .iter()
        .flat_map(|s| s.verdicts.iter().map(move |v| (s.sample_id.clone(), v)))
        .collect();
    verdicts.sort_by(|a, b| {
        b.1.breakdown
            .confidence
            .total_cmp(&a.1.breakdown.confidence)
            .then_with(|| (&a.0, &a.1.candidate_id).cmp(&(&b.0, &b.1.candidate_id)))
    });
    if args.top > 0 && !verdicts.is_empty() {
        println!("top verdicts by confidence:");
        for (sample_id, v) in verdicts.iter().take(args.top) {
            println!(
                "  {sample_id}/{}: ctc={} confidence={:.4} p(CK|C)={:.3} p(CD45|C)={:.3}",
                v.candidate_id, v.is_ctc, v.breakdown.confidence, v.breakdown.p_ck_given_c,
                v.breakdown.p_cd45_given_c
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
