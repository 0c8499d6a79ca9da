//! The pluggable detector contract for stages 1 and 2, the `Detection`
//! currency the stages exchange, and the external-detector wire protocol
//! that lets out-of-process backends (typically neural models) replace
//! the built-in classical ones.
//!
//! External backends are child processes speaking one JSON object per
//! line over stdin/stdout:
//!
//! ```text
//! request:  {"stage":"stage1_ck","width":W,"height":H,"pixels_b64":"..."}
//! reply:    {"detections":[{"bbox":[x,y,w,h],"score":0.93,"mask_rle":[5,3,8]}]}
//! ```
//!
//! `pixels_b64` is the row-major image bytes, base64. Masks travel as
//! alternating run-length counts over the row-major grid, first run
//! counting zeros. Exactly one reply line per request line; a non-zero
//! exit becomes a stage error on the sample being processed, never a
//! crash of the batch.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{BinaryMask, BoundingBox, GrayImage};
use crate::segment::{detect_ck_classical, detect_dapi_classical, ClassicalDetectorConfig};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("failed to spawn external detector {argv:?}: {source}")]
    Spawn {
        argv: Vec<String>,
        source: std::io::Error,
    },
    #[error("external detector i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("external detector exited with {status}{}", stderr_excerpt(.stderr))]
    ProcessFailed { status: String, stderr: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("detection score {0} outside [0,1]")]
    ScoreOutOfRange(f64),
    #[error("stage2_dapi detection without a mask")]
    MissingMask,
    #[error("mask RLE runs sum to {got}, expected {expected} for {width}x{height}")]
    RleLengthMismatch {
        got: u64,
        expected: u64,
        width: u32,
        height: u32,
    },
    #[error("external binding requires an endpoint command")]
    MissingEndpoint,
}

fn stderr_excerpt(stderr: &str) -> String {
    let trimmed = stderr.trim();
    if trimmed.is_empty() {
        String::new()
    } else {
        format!(": {}", trimmed.chars().take(300).collect::<String>())
    }
}

/// Which stain a detection refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionLabel {
    Ck,
    Dapi,
}

/// A scored region proposal; the inter-stage currency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    /// Backend confidence in [0, 1].
    pub score: f64,
    /// Pixel mask on the source grid; required for stage-2 detections.
    pub mask: Option<BinaryMask>,
    pub label: DetectionLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorStage {
    Stage1Ck,
    Stage2Dapi,
}

impl DetectorStage {
    pub fn label(self) -> DetectionLabel {
        match self {
            DetectorStage::Stage1Ck => DetectionLabel::Ck,
            DetectorStage::Stage2Dapi => DetectionLabel::Dapi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Classical,
    External,
}

/// Declarative backend selection for one stage; the serializable half of
/// the detector plug point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorBinding {
    pub kind: DetectorKind,
    pub stage: DetectorStage,
    /// argv of the external process; required when `kind` is external.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<Vec<String>>,
    /// Whether the external process may be invoked from several workers
    /// at once. When false the orchestrator serializes calls.
    #[serde(default)]
    pub concurrency_safe: bool,
}

impl DetectorBinding {
    pub fn classical(stage: DetectorStage) -> Self {
        Self {
            kind: DetectorKind::Classical,
            stage,
            endpoint: None,
            concurrency_safe: true,
        }
    }
}

/// A stage backend. Implementations must be shareable across workers;
/// backends that are not internally concurrency-safe serialize themselves.
pub trait Detector: Send + Sync {
    fn stage(&self) -> DetectorStage;
    fn detect(&self, img: &GrayImage) -> Result<Vec<Detection>, DetectorError>;
}

pub struct ClassicalDetector {
    stage: DetectorStage,
    cfg: ClassicalDetectorConfig,
}

impl Detector for ClassicalDetector {
    fn stage(&self) -> DetectorStage {
        self.stage
    }

    fn detect(&self, img: &GrayImage) -> Result<Vec<Detection>, DetectorError> {
        let dets = match self.stage {
            DetectorStage::Stage1Ck => detect_ck_classical(img, &self.cfg),
            DetectorStage::Stage2Dapi => detect_dapi_classical(img, &self.cfg),
        };
        Ok(sort_by_score(dets))
    }
}

pub struct ExternalDetector {
    stage: DetectorStage,
    argv: Vec<String>,
    /// Present when the backend did not declare itself concurrency-safe.
    lock: Option<Mutex<()>>,
}

impl Detector for ExternalDetector {
    fn stage(&self) -> DetectorStage {
        self.stage
    }

    fn detect(&self, img: &GrayImage) -> Result<Vec<Detection>, DetectorError> {
        let _serialize = self.lock.as_ref().map(|m| m.lock().expect("detector lock"));
        let reply_line = self.exchange(&encode_request(self.stage, img))?;
        let detections = decode_reply(&reply_line, self.stage, img.dims())?;
        Ok(sort_by_score(detections))
    }
}

impl ExternalDetector {
    /// One child process per request: write the request line, close stdin,
    /// read the reply line, require a clean exit.
    fn exchange(&self, request: &str) -> Result<String, DetectorError> {
        let mut child = Command::new(&self.argv[0])
            .args(&self.argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| DetectorError::Spawn {
                argv: self.argv.clone(),
                source,
            })?;

        let mut stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");

        // Writer on its own thread so a child that replies while we are
        // still writing cannot deadlock on full pipe buffers.
        let (out, err) = std::thread::scope(|scope| -> Result<(String, String), DetectorError> {
            let request = format!("{request}\n");
            let writer = scope.spawn(move || -> std::io::Result<()> {
                stdin.write_all(request.as_bytes())?;
                Ok(())
            });
            let err_reader = scope.spawn(move || {
                let mut buf = String::new();
                let _ = stderr.read_to_string(&mut buf);
                buf
            });
            let mut out = String::new();
            stdout.read_to_string(&mut out)?;
            // A broken pipe on write just means the child never read the
            // request; the exit status check below reports that case.
            let _ = writer.join().expect("writer thread");
            let err = err_reader.join().expect("stderr thread");
            Ok((out, err))
        })?;

        let status = child.wait()?;
        if !status.success() {
            return Err(DetectorError::ProcessFailed {
                status: status.to_string(),
                stderr: err,
            });
        }
        let mut lines = out.lines().filter(|l| !l.trim().is_empty());
        let reply = lines
            .next()
            .ok_or_else(|| DetectorError::Protocol("empty reply from external detector".into()))?;
        if lines.next().is_some() {
            return Err(DetectorError::Protocol(
                "expected exactly one reply line per request".into(),
            ));
        }
        Ok(reply.to_string())
    }
}

/// Instantiate the backend a binding describes.
pub fn build_detector(
    binding: &DetectorBinding,
    classical_cfg: &ClassicalDetectorConfig,
) -> Result<Box<dyn Detector>, DetectorError> {
    match binding.kind {
        DetectorKind::Classical => Ok(Box::new(ClassicalDetector {
            stage: binding.stage,
            cfg: classical_cfg.clone(),
        })),
        DetectorKind::External => {
            let argv = binding
                .endpoint
                .clone()
                .filter(|a| !a.is_empty())
                .ok_or(DetectorError::MissingEndpoint)?;
            Ok(Box::new(ExternalDetector {
                stage: binding.stage,
                argv,
                lock: (!binding.concurrency_safe).then(|| Mutex::new(())),
            }))
        }
    }
}

/// One-shot convenience: build the bound backend and run it on an image.
pub fn run_detector(
    binding: &DetectorBinding,
    img: &GrayImage,
    classical_cfg: &ClassicalDetectorConfig,
) -> Result<Vec<Detection>, DetectorError> {
    build_detector(binding, classical_cfg)?.detect(img)
}

/// Stable sort by descending score: equal scores keep backend order.
fn sort_by_score(mut dets: Vec<Detection>) -> Vec<Detection> {
    dets.sort_by(|a, b| b.score.total_cmp(&a.score));
    dets
}

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct WireRequest {
    stage: DetectorStage,
    width: u32,
    height: u32,
    pixels_b64: String,
}

#[derive(Serialize, Deserialize)]
struct WireReply {
    detections: Vec<WireDetection>,
}

#[derive(Serialize, Deserialize)]
struct WireDetection {
    bbox: [i64; 4],
    score: f64,
    #[serde(default)]
    mask_rle: Option<Vec<u64>>,
}

/// Serialize one request line (without the trailing newline).
pub fn encode_request(stage: DetectorStage, img: &GrayImage) -> String {
    serde_json::to_string(&WireRequest {
        stage,
        width: img.width(),
        height: img.height(),
        pixels_b64: BASE64.encode(img.pixels()),
    })
    .expect("request serialization")
}

/// Parse one request line; the counterpart used by backend processes.
pub fn decode_request(line: &str) -> Result<(DetectorStage, GrayImage), DetectorError> {
    let req: WireRequest = serde_json::from_str(line)
        .map_err(|e| DetectorError::Protocol(format!("bad request: {e}")))?;
    let bytes = BASE64
        .decode(req.pixels_b64.as_bytes())
        .map_err(|e| DetectorError::Protocol(format!("bad pixels_b64: {e}")))?;
    let img = GrayImage::new(req.width, req.height, bytes)
        .map_err(|e| DetectorError::Protocol(format!("bad request image: {e}")))?;
    Ok((req.stage, img))
}

/// Serialize one reply line for a list of detections (without newline).
pub fn encode_reply(detections: &[Detection]) -> String {
    let wire = WireReply {
        detections: detections
            .iter()
            .map(|d| WireDetection {
                bbox: [d.bbox.x as i64, d.bbox.y as i64, d.bbox.w as i64, d.bbox.h as i64],
                score: d.score,
                mask_rle: d.mask.as_ref().map(encode_rle_mask),
            })
            .collect(),
    };
    serde_json::to_string(&wire).expect("reply serialization")
}

/// Parse and validate one reply line against the request's stage and
/// image dimensions. Violations are protocol errors, not corrections:
/// clamping an out-of-range score here would silently corrupt the
/// downstream confidence products.
pub fn decode_reply(
    line: &str,
    stage: DetectorStage,
    dims: (u32, u32),
) -> Result<Vec<Detection>, DetectorError> {
    let reply: WireReply = serde_json::from_str(line)
        .map_err(|e| DetectorError::Protocol(format!("bad reply: {e}")))?;
    let (width, height) = dims;
    reply
        .detections
        .into_iter()
        .map(|wire| {
            if !(0.0..=1.0).contains(&wire.score) || wire.score.is_nan() {
                return Err(DetectorError::ScoreOutOfRange(wire.score));
            }
            let [x, y, w, h] = wire.bbox;
            if !(1..=u32::MAX as i64).contains(&w)
                || !(1..=u32::MAX as i64).contains(&h)
                || x.abs() > i32::MAX as i64
                || y.abs() > i32::MAX as i64
            {
                return Err(DetectorError::Protocol(format!(
                    "bbox [{x},{y},{w},{h}] is not a positive-size box"
                )));
            }
            let bbox = BoundingBox::new(x as i32, y as i32, w as u32, h as u32);
            let mask = match (wire.mask_rle, stage) {
                (None, DetectorStage::Stage2Dapi) => return Err(DetectorError::MissingMask),
                (None, _) => None,
                (Some(runs), _) => {
                    let mask = decode_rle_mask(&runs, width, height)?;
                    validate_mask_in_bbox(&mask, &bbox)?;
                    Some(mask)
                }
            };
            Ok(Detection {
                bbox,
                score: wire.score,
                mask,
                label: stage.label(),
            })
        })
        .collect()
}

fn validate_mask_in_bbox(mask: &BinaryMask, bbox: &BoundingBox) -> Result<(), DetectorError> {
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if !mask.get(x, y) {
                continue;
            }
            let inside = (x as i64) >= bbox.x as i64
                && (y as i64) >= bbox.y as i64
                && (x as i64) < bbox.x as i64 + bbox.w as i64
                && (y as i64) < bbox.y as i64 + bbox.h as i64;
            if !inside {
                return Err(DetectorError::Protocol(format!(
                    "mask pixel ({x},{y}) lies outside bbox ({},{}) {}x{}",
                    bbox.x, bbox.y, bbox.w, bbox.h
                )));
            }
        }
    }
    Ok(())
}

/// Decode alternating run lengths (first run counts zeros) into a mask.
pub fn decode_rle_mask(runs: &[u64], width: u32, height: u32) -> Result<BinaryMask, DetectorError> {
    let expected = width as u64 * height as u64;
    let got: u64 = runs.iter().sum();
    if got != expected {
        return Err(DetectorError::RleLengthMismatch {
            got,
            expected,
            width,
            height,
        });
    }
    let mut bits = Vec::with_capacity(expected as usize);
    let mut value = false;
    for &run in runs {
        bits.resize(bits.len() + run as usize, value);
        value = !value;
    }
    BinaryMask::new(width, height, bits)
        .map_err(|e| DetectorError::Protocol(format!("bad mask: {e}")))
}

/// Canonical alternating encoding of a mask: first run counts zeros (and
/// is the only run allowed to be zero-length), every later run is > 0.
pub fn encode_rle_mask(mask: &BinaryMask) -> Vec<u64> {
    let mut runs = Vec::new();
    let mut value = false;
    let mut run = 0u64;
    for &bit in mask.bits() {
        if bit == value {
            run += 1;
        } else {
            runs.push(run);
            value = bit;
            run = 1;
        }
    }
    runs.push(run);
    runs
}
