//! Composes the three stages over whole samples and batches, tracks
//! per-stage fallout (no CK found / no DAPI found / fully evaluated) and
//! computes the evaluation report.
//!
//! Per-sample problems never abort a batch. A recoverable problem (one
//! bad CK region, one degenerate candidate) is recorded on the sample's
//! result; a fatal one (unreadable input, the stage-1 backend failing,
//! every CK region failing stage 2) quarantines the sample as a
//! [`SampleFailure`] so it is reported rather than silently dropped or
//! classified.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::{classify_candidate, CandidateScores, DecisionParams, Verdict};
use crate::detector::{Detector, DetectorStage};
use crate::raster::{BinaryMask, ChannelSet, GrayImage};
use crate::segment::ClassicalDetectorConfig;
use crate::threshold::{apply_threshold, otsu_threshold};

#[derive(Debug, Error, PartialEq)]
pub enum PipelineConfigError {
    #[error("{field}: {message}")]
    Field { field: &'static str, message: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("empty batch: nothing to evaluate")]
    EmptyBatch,
    #[error("no label provided for sample {sample_id}")]
    MissingLabel { sample_id: String },
}

/// Everything the per-sample pipeline needs besides the two detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub params: DecisionParams,
    #[serde(default)]
    pub classical: ClassicalDetectorConfig,
    /// Extra margin around each stage-1 box before cropping, so nuclei
    /// halfway across the box edge stay whole.
    #[serde(default)]
    pub crop_padding: u32,
    /// A sample is positive when at least this many candidates are CTCs.
    #[serde(default = "default_min_ctc_count")]
    pub min_ctc_count: usize,
    /// Threshold the whole CD45 layer once instead of per crop.
    #[serde(default)]
    pub cd45_full_layer: bool,
    /// Stage-3 masks are discarded when Otsu's class means are closer
    /// than this. Otsu always produces *some* split, even on a crop that
    /// is pure background noise; a floor on the split contrast is what
    /// distinguishes "no signal here" from a faint real signal. 0 turns
    /// the gate off.
    #[serde(default)]
    pub min_class_separation: u8,
}

fn default_min_ctc_count() -> usize {
    1
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            params: DecisionParams::default(),
            classical: ClassicalDetectorConfig::default(),
            crop_padding: 0,
            min_ctc_count: 1,
            cd45_full_layer: false,
            min_class_separation: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineConfigError> {
        let field_err = |field, message: String| PipelineConfigError::Field { field, message };
        self.params
            .validate()
            .map_err(|e| field_err("params", e.to_string()))?;
        if self.min_ctc_count < 1 {
            return Err(field_err(
                "min_ctc_count",
                "must be at least 1".to_string(),
            ));
        }
        let t = self.classical.dapi_score_threshold;
        if !(0.0..=1.0).contains(&t) || t.is_nan() {
            return Err(field_err(
                "classical.dapi_score_threshold",
                format!("must be within [0, 1], got {t}"),
            ));
        }
        let f = &self.classical.size_filter;
        if let Some(mpp) = f.microns_per_pixel {
            if mpp <= 0.0 || mpp.is_nan() {
                return Err(field_err(
                    "classical.size_filter.microns_per_pixel",
                    format!("must be > 0, got {mpp}"),
                ));
            }
        }
        if f.min_diameter_um < 0.0 || f.min_diameter_um.is_nan() {
            return Err(field_err(
                "classical.size_filter.min_diameter_um",
                format!("must be >= 0, got {}", f.min_diameter_um),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStage {
    Load,
    Stage1,
    Stage2,
    Stage3,
}

/// A recoverable problem recorded against one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: PipelineStage,
    pub message: String,
}

/// A fatal per-sample problem; the sample lands in the error bucket.
#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("sample {sample_id} failed at {stage:?}: {message}")]
pub struct SampleFailure {
    pub sample_id: String,
    pub stage: PipelineStage,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleOutcome {
    /// Stage 1 found nothing; the sample is predicted negative.
    NoCkDetected,
    /// CK regions existed but no nucleus candidate survived stage 2.
    NoDapiDetected,
    /// At least one candidate reached the decision layer.
    Evaluated,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTimings {
    pub stage1_us: u64,
    pub stage2_us: u64,
    pub stage3_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub sample_id: String,
    pub outcome: SampleOutcome,
    pub verdicts: Vec<Verdict>,
    pub sample_positive: bool,
    pub timings: StageTimings,
    /// Recoverable problems hit along the way; empty on a clean run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stage_errors: Vec<StageError>,
}

/// Outcome of processing one sample in a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SampleRecord {
    Completed(SampleResult),
    Failed(SampleFailure),
}

impl SampleRecord {
    pub fn completed(&self) -> Option<&SampleResult> {
        match self {
            SampleRecord::Completed(r) => Some(r),
            SampleRecord::Failed(_) => None,
        }
    }

    pub fn sample_id(&self) -> &str {
        match self {
            SampleRecord::Completed(r) => &r.sample_id,
            SampleRecord::Failed(f) => &f.sample_id,
        }
    }
}

/// Binarize a stage-3 crop, treating "no usable split" as an empty mask:
/// constant crops have no signal by definition, and splits whose class
/// means are closer than the configured floor are noise artifacts.
fn stage3_mask(img: &GrayImage, min_class_separation: u8) -> BinaryMask {
    match otsu_threshold(img) {
        Err(_) => BinaryMask::empty(img.width(), img.height()).expect("nonzero dims"),
        Ok(otsu) if otsu.class_separation() < min_class_separation as f64 => {
            BinaryMask::empty(img.width(), img.height()).expect("nonzero dims")
        }
        Ok(otsu) => apply_threshold(img, otsu.t)
            .to_mask()
            .expect("thresholded image is binary"),
    }
}

/// Run the full three-stage pipeline on one sample.
///
/// Per CK region: crop all three layers to the (padded) box, run stage 2
/// on the DAPI crop, binarize the CK and CD45 crops, then classify every
/// surviving candidate mask against them.
pub fn run_sample(
    x: &ChannelSet,
    stage1: &dyn Detector,
    stage2: &dyn Detector,
    cfg: &PipelineConfig,
) -> Result<SampleResult, SampleFailure> {
    debug_assert_eq!(stage1.stage(), DetectorStage::Stage1Ck);
    debug_assert_eq!(stage2.stage(), DetectorStage::Stage2Dapi);

    let mut timings = StageTimings::default();
    let started = Instant::now();
    let ck_dets = stage1.detect(&x.ck).map_err(|e| SampleFailure {
        sample_id: x.sample_id.clone(),
        stage: PipelineStage::Stage1,
        message: e.to_string(),
    })?;
    timings.stage1_us = started.elapsed().as_micros() as u64;

    if ck_dets.is_empty() {
        return Ok(SampleResult {
            sample_id: x.sample_id.clone(),
            outcome: SampleOutcome::NoCkDetected,
            verdicts: Vec::new(),
            sample_positive: false,
            timings,
            stage_errors: Vec::new(),
        });
    }

    // Shared full-layer CD45 mask when configured; otherwise each crop is
    // thresholded on its own, matching "t is optimized per image" with the
    // crop as the image.
    let full_cd45 = cfg
        .cd45_full_layer
        .then(|| stage3_mask(&x.cd45, cfg.min_class_separation));

    let mut verdicts = Vec::new();
    let mut stage_errors = Vec::new();
    let mut stage2_time = Duration::ZERO;
    let mut stage3_time = Duration::ZERO;
    let mut any_dapi = false;
    let mut any_region_completed = false;

    for (region, det) in ck_dets.iter().enumerate() {
        let crops: Result<_, crate::raster::RasterError> = (|| {
            Ok((
                x.dapi.crop(&det.bbox, cfg.crop_padding)?,
                x.ck.crop(&det.bbox, cfg.crop_padding)?,
                x.cd45.crop(&det.bbox, cfg.crop_padding)?,
            ))
        })();
        let (dapi_crop, ck_crop, cd45_crop) = match crops {
            Ok(c) => c,
            Err(e) => {
                log::warn!("sample {}: region {region}: {e}", x.sample_id);
                stage_errors.push(StageError {
                    stage: PipelineStage::Stage2,
                    message: format!("region {region}: {e}"),
                });
                continue;
            }
        };

        let t = Instant::now();
        let dapi_dets = match stage2.detect(&dapi_crop) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("sample {}: region {region}: {e}", x.sample_id);
                stage_errors.push(StageError {
                    stage: PipelineStage::Stage2,
                    message: format!("region {region}: {e}"),
                });
                continue;
            }
        };
        stage2_time += t.elapsed();
        any_region_completed = true;
        if dapi_dets.is_empty() {
            continue;
        }
        any_dapi = true;

        let t = Instant::now();
        let ck_mask = stage3_mask(&ck_crop, cfg.min_class_separation);
        let cd45_mask = match &full_cd45 {
            Some(full) => full
                .crop(&det.bbox, cfg.crop_padding)
                .expect("same rectangle as the layer crops"),
            None => stage3_mask(&cd45_crop, cfg.min_class_separation),
        };
        for (j, dapi_det) in dapi_dets.iter().enumerate() {
            let candidate_id = format!("ck{region}/dapi{j}");
            let Some(candidate) = &dapi_det.mask else {
                stage_errors.push(StageError {
                    stage: PipelineStage::Stage3,
                    message: format!("{candidate_id}: stage-2 detection carries no mask"),
                });
                continue;
            };
            let scores = CandidateScores {
                p_ck: det.score,
                p_c: dapi_det.score,
            };
            match classify_candidate(
                candidate_id.clone(),
                candidate,
                &ck_mask,
                &cd45_mask,
                scores,
                &cfg.params,
            ) {
                Ok(v) => verdicts.push(v),
                Err(e) => {
                    log::warn!("sample {}: {candidate_id}: {e}", x.sample_id);
                    stage_errors.push(StageError {
                        stage: PipelineStage::Stage3,
                        message: format!("{candidate_id}: {e}"),
                    });
                }
            }
        }
        stage3_time += t.elapsed();
    }

    if !any_region_completed {
        // Every CK region failed before stage 2 could say anything, so
        // neither "no DAPI" nor a classification would be truthful.
        return Err(SampleFailure {
            sample_id: x.sample_id.clone(),
            stage: PipelineStage::Stage2,
            message: format!(
                "all {} CK regions failed: {}",
                ck_dets.len(),
                stage_errors
                    .first()
                    .map(|e| e.message.clone())
                    .unwrap_or_default()
            ),
        });
    }

    timings.stage2_us = stage2_time.as_micros() as u64;
    timings.stage3_us = stage3_time.as_micros() as u64;
    let n_ctc = verdicts.iter().filter(|v| v.is_ctc).count();
    Ok(SampleResult {
        sample_id: x.sample_id.clone(),
        outcome: if any_dapi {
            SampleOutcome::Evaluated
        } else {
            SampleOutcome::NoDapiDetected
        },
        sample_positive: n_ctc > 0 && n_ctc >= cfg.min_ctc_count,
        verdicts,
        timings,
        stage_errors,
    })
}

/// Bounded-parallelism batch driver. Sample processing is confined to one
/// worker per sample and results come back in input order, so a rerun
/// with the same inputs produces the same report bit for bit.
pub struct BatchRunner<'a> {
    pub stage1: &'a dyn Detector,
    pub stage2: &'a dyn Detector,
    pub cfg: &'a PipelineConfig,
    /// Worker threads; 0 picks the rayon default.
    pub workers: usize,
}

impl BatchRunner<'_> {
    pub fn run<T, F>(&self, inputs: Vec<T>, load: F) -> Vec<SampleRecord>
    where
        T: Send,
        F: Fn(T) -> Result<ChannelSet, SampleFailure> + Sync + Send,
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .expect("worker pool");
        pool.install(|| {
            inputs
                .into_par_iter()
                .map(|input| match load(input) {
                    Ok(set) => match run_sample(&set, self.stage1, self.stage2, self.cfg) {
                        Ok(result) => SampleRecord::Completed(result),
                        Err(failure) => SampleRecord::Failed(failure),
                    },
                    Err(failure) => SampleRecord::Failed(failure),
                })
                .collect()
        })
    }

    pub fn run_channel_sets(&self, sets: Vec<ChannelSet>) -> Vec<SampleRecord> {
        self.run(sets, Ok)
    }
}

/// Batch-level accounting; mirrors the per-sample fallout partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub n_samples: usize,
    pub n_no_ck: usize,
    pub n_no_dapi: usize,
    pub n_evaluated: usize,
    pub n_predicted_positive: usize,
    pub n_predicted_negative: usize,
    /// Fraction of samples whose prediction matches the label; present
    /// only when labels were supplied.
    pub accuracy: Option<f64>,
    /// Accuracy restricted to fully evaluated samples.
    pub stage3_accuracy: Option<f64>,
}

/// Aggregate completed sample results, checking predictions against
/// labels when given. Labels are keyed by sample id and must cover every
/// result (a superset is fine).
pub fn evaluate_batch(
    results: &[SampleResult],
    labels: Option<&BTreeMap<String, bool>>,
) -> Result<BatchReport, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    let mut report = BatchReport {
        n_samples: results.len(),
        n_no_ck: 0,
        n_no_dapi: 0,
        n_evaluated: 0,
        n_predicted_positive: 0,
        n_predicted_negative: 0,
        accuracy: None,
        stage3_accuracy: None,
    };
    for r in results {
        match r.outcome {
            SampleOutcome::NoCkDetected => report.n_no_ck += 1,
            SampleOutcome::NoDapiDetected => report.n_no_dapi += 1,
            SampleOutcome::Evaluated => report.n_evaluated += 1,
        }
        if r.sample_positive {
            report.n_predicted_positive += 1;
        } else {
            report.n_predicted_negative += 1;
        }
    }
    if let Some(labels) = labels {
        let mut correct = 0usize;
        let mut stage3_correct = 0usize;
        for r in results {
            let label = labels
                .get(&r.sample_id)
                .copied()
                .ok_or_else(|| EvalError::MissingLabel {
                    sample_id: r.sample_id.clone(),
                })?;
            if r.sample_positive == label {
                correct += 1;
                if r.outcome == SampleOutcome::Evaluated {
                    stage3_correct += 1;
                }
            }
        }
        report.accuracy = Some(correct as f64 / results.len() as f64);
        if report.n_evaluated > 0 {
            report.stage3_accuracy = Some(stage3_correct as f64 / report.n_evaluated as f64);
        }
    }
    Ok(report)
}
