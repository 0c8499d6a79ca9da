//! Run configuration: detector bindings plus every pipeline knob, loaded
//! from JSON and overridable by command-line flags. Validation happens
//! before any processing so an invalid config never produces partial
//! output.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ctcpipe::decision::DecisionParams;
use ctcpipe::detector::{build_detector, Detector, DetectorBinding, DetectorKind, DetectorStage};
use ctcpipe::pipeline::PipelineConfig;
use ctcpipe::segment::{ClassicalDetectorConfig, SizeFilter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub stage1: DetectorBinding,
    pub stage2: DetectorBinding,
    pub params: DecisionParams,
    pub size_filter: SizeFilter,
    pub dapi_score_threshold: f64,
    pub crop_padding: u32,
    pub min_ctc_count: usize,
    pub cd45_full_layer: bool,
    pub min_class_separation: u8,
    /// Worker threads for the batch; 0 means one per CPU.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            stage1: DetectorBinding::classical(DetectorStage::Stage1Ck),
            stage2: DetectorBinding::classical(DetectorStage::Stage2Dapi),
            params: DecisionParams::default(),
            size_filter: SizeFilter::default(),
            dapi_score_threshold: 0.9,
            crop_padding: 0,
            min_ctc_count: 1,
            cd45_full_layer: false,
            min_class_separation: 0,
            workers: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Field-by-field validation; the error names the field and bound.
    pub fn validate(&self) -> Result<()> {
        for (field, binding, expected) in [
            ("stage1", &self.stage1, DetectorStage::Stage1Ck),
            ("stage2", &self.stage2, DetectorStage::Stage2Dapi),
        ] {
            if binding.stage != expected {
                bail!("{field}.stage: must be {expected:?} for this slot");
            }
            if binding.kind == DetectorKind::External
                && binding.endpoint.as_ref().is_none_or(|e| e.is_empty())
            {
                bail!("{field}.endpoint: external detectors need a non-empty argv");
            }
        }
        self.params
            .validate()
            .map_err(|e| anyhow::anyhow!("params.{e}"))?;
        if !(0.0..=1.0).contains(&self.dapi_score_threshold) || self.dapi_score_threshold.is_nan() {
            bail!(
                "dapi_score_threshold: must be within [0, 1], got {}",
                self.dapi_score_threshold
            );
        }
        if let Some(mpp) = self.size_filter.microns_per_pixel {
            if mpp <= 0.0 || mpp.is_nan() {
                bail!("size_filter.microns_per_pixel: must be > 0, got {mpp}");
            }
        }
        if self.size_filter.min_diameter_um < 0.0 || self.size_filter.min_diameter_um.is_nan() {
            bail!(
                "size_filter.min_diameter_um: must be >= 0, got {}",
                self.size_filter.min_diameter_um
            );
        }
        if self.min_ctc_count < 1 {
            bail!("min_ctc_count: must be at least 1");
        }
        Ok(())
    }

    pub fn classical_config(&self) -> ClassicalDetectorConfig {
        ClassicalDetectorConfig {
            size_filter: self.size_filter.clone(),
            dapi_score_threshold: self.dapi_score_threshold,
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            params: self.params,
            classical: self.classical_config(),
            crop_padding: self.crop_padding,
            min_ctc_count: self.min_ctc_count,
            cd45_full_layer: self.cd45_full_layer,
            min_class_separation: self.min_class_separation,
        }
    }

    pub fn build_detectors(&self) -> Result<(Box<dyn Detector>, Box<dyn Detector>)> {
        let classical = self.classical_config();
        let stage1 = build_detector(&self.stage1, &classical).context("stage1")?;
        let stage2 = build_detector(&self.stage2, &classical).context("stage2")?;
        Ok((stage1, stage2))
    }
}
