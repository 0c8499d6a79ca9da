//! The `detect` subcommand: load -> stage 1 -> stage 2 -> stage 3 over
//! every sample subdirectory, then write results and the batch report.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};

use ctcpipe::dataset::{self, MANIFEST_FILE};
use ctcpipe::decision::DecisionParams;
use ctcpipe::pipeline::{evaluate_batch, BatchRunner, PipelineStage, SampleFailure, SampleRecord};
use ctcpipe::synth::batch::BatchManifest;

use crate::config::RunConfig;
use crate::results::write_results;
use crate::DetectArgs;

pub fn run(args: DetectArgs) -> Result<ExitCode> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(path) = &args.params {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading params {}", path.display()))?;
        cfg.params = serde_json::from_str::<DecisionParams>(&text)
            .with_context(|| format!("parsing params {}", path.display()))?;
    }
    if let Some(r1) = args.r1 {
        cfg.params.r1 = r1;
    }
    if let Some(r2) = args.r2 {
        cfg.params.r2 = r2;
    }
    if let Some(s) = args.semantics {
        cfg.params.semantics = s.into();
    }
    if let Some(mpp) = args.microns_per_pixel {
        cfg.size_filter.microns_per_pixel = Some(mpp);
    }
    if let Some(p) = args.crop_padding {
        cfg.crop_padding = p;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    cfg.validate()?;

    let samples = dataset::list_sample_dirs(&args.input)?;
    if samples.is_empty() {
        bail!("no samples found under {}", args.input.display());
    }

    // Labels ride along in the dataset manifest when the input was
    // generated; they only add accuracy fields to the report.
    let manifest_path = args.input.join(MANIFEST_FILE);
    let labels = if !args.ignore_labels && manifest_path.exists() {
        let manifest = BatchManifest::load(&manifest_path)
            .with_context(|| format!("reading {}", manifest_path.display()))?;
        Some(manifest.labels())
    } else {
        None
    };

    let (stage1, stage2) = cfg.build_detectors()?;
    let pipeline_cfg = cfg.pipeline_config();
    let runner = BatchRunner {
        stage1: stage1.as_ref(),
        stage2: stage2.as_ref(),
        cfg: &pipeline_cfg,
        workers: cfg.workers,
    };
    let records = runner.run(samples, |(id, dir): (String, PathBuf)| {
        dataset::load_channel_set(&dir, &id).map_err(|e| SampleFailure {
            sample_id: id,
            stage: PipelineStage::Load,
            message: e.to_string(),
        })
    });

    let completed: Vec<_> = records
        .iter()
        .filter_map(|r| r.completed().cloned())
        .collect();
    let n_failed = records.len() - completed.len();
    let n_stage_errors: usize = completed.iter().map(|r| r.stage_errors.len()).sum();

    let report = if completed.is_empty() {
        None
    } else {
        Some(evaluate_batch(&completed, labels.as_ref())?)
    };
    write_results(&args.output, &records, report.as_ref())?;

    if let Some(report) = &report {
        println!(
            "{} samples: {} no-CK, {} no-DAPI, {} evaluated; {} predicted positive",
            report.n_samples,
            report.n_no_ck,
            report.n_no_dapi,
            report.n_evaluated,
            report.n_predicted_positive
        );
        if let Some(acc) = report.accuracy {
            println!("accuracy {:.2}%", acc * 100.0);
        }
        if let Some(acc) = report.stage3_accuracy {
            println!("stage-3 accuracy {:.2}%", acc * 100.0);
        }
    }
    if n_failed > 0 || n_stage_errors > 0 {
        eprintln!("{n_failed} samples failed, {n_stage_errors} stage errors recorded");
        for record in &records {
            if let SampleRecord::Failed(f) = record {
                eprintln!("  {f}");
            }
        }
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}
