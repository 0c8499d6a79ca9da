//! Batch detection of circulating tumor cells (CTCs) in multi-channel
//! darkfield microscopy samples.
//!
//! A sample is three aligned grayscale rasters: a cytokeratin stain (CK),
//! a cell-nucleus stain (DAPI) and a leukocyte marker (CD45). Each sample
//! runs through three stages:
//!
//! 1. **Localize** CK regions on the CK layer (bounding boxes).
//! 2. **Segment** nucleus candidates on the DAPI layer inside each region.
//! 3. **Decide** per candidate: threshold the CD45 layer, measure how much
//!    of the candidate is covered by CK and by CD45, and classify it from
//!    those overlap fractions.
//!
//! Stage 1 and 2 backends are pluggable: the built-in classical detector
//! (Otsu threshold + connected components) or an external process speaking
//! the line protocol in [`detector`]. [`synth`] generates deterministic
//! synthetic samples with exact ground truth, which is how the pipeline is
//! verified end to end.

pub mod dataset;
pub mod decision;
pub mod detector;
pub mod pipeline;
pub mod raster;
pub mod segment;
pub mod synth;
pub mod threshold;

pub use decision::{ConfidenceBreakdown, DecisionParams, Semantics, Verdict};
pub use detector::{Detection, DetectionLabel, Detector, DetectorBinding, DetectorStage};
pub use pipeline::{BatchReport, PipelineConfig, SampleOutcome, SampleResult};
pub use raster::{BinaryMask, BoundingBox, ChannelSet, GrayImage};
