//! Batch-level synthetic dataset generation: randomized scenes drawn from
//! a [`BatchSpec`], written in the same on-disk layout the CLI ingests,
//! plus a manifest with the derived labels and per-candidate overlaps.
//!
//! Scene layout is chosen so the planted answer is never ambiguous: the
//! CK/DAPI cluster lives near the scene center, free CD45 blobs live in
//! the top-left corner region, and the two regions cannot touch for any
//! drawable radius. Positive samples plant one nucleus well above the CK
//! overlap threshold with no CD45 on it; negative samples are one of four
//! shapes (no CK at all, CK without nuclei, nucleus with sub-threshold CK
//! overlap, or a CD45-coated nucleus). Positives carry at most a trace of
//! CD45 contact, far below the r2 threshold.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use rand_chacha::rand_core::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    generate, rng_from_seed, unit_f64, ChannelSet, DapiPlacement, DapiSpec, DiscSpec, GroundTruth,
    NoiseKind, NoiseSpec, SceneSpec, SplitMix64, SynthError,
};
use crate::dataset;
use crate::decision::{CalibrationRecord, DecisionParams};

/// Parameter ranges for a generated batch. Inclusive ranges as
/// (low, high) pairs; every draw is deterministic in (seed, index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchSpec {
    pub n_samples: usize,
    pub n_positive: usize,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub background: u8,
    pub ck_radius: (u32, u32),
    pub ck_intensity: (u8, u8),
    pub dapi_radius: (u32, u32),
    pub dapi_intensity: (u8, u8),
    pub cd45_extra_radius: (u32, u32),
    pub cd45_intensity: (u8, u8),
    /// CK overlap planted for positives; keep the low end well above r1.
    pub positive_ck_overlap: (f64, f64),
    /// Light CD45 contact planted on about half the positives; keep the
    /// high end well below r2 so the planted answer stays unambiguous.
    pub positive_cd45_overlap: (f64, f64),
    /// CK overlap planted for "almost" negatives; keep below r1.
    pub negative_ck_overlap: (f64, f64),
    /// CD45 coverage planted on coated negatives; keep above r2.
    pub coated_cd45_overlap: (f64, f64),
    pub gaussian_amplitude: (f64, f64),
    pub salt_pepper_fraction: f64,
    /// Free CD45 discs per sample, drawn from this range.
    pub free_cd45_count: (u32, u32),
}

impl Default for BatchSpec {
    fn default() -> Self {
        Self {
            n_samples: 10,
            n_positive: 5,
            seed: 1,
            width: 224,
            height: 224,
            background: 20,
            ck_radius: (18, 28),
            ck_intensity: (190, 215),
            dapi_radius: (7, 11),
            dapi_intensity: (235, 250),
            cd45_extra_radius: (0, 3),
            cd45_intensity: (180, 210),
            positive_ck_overlap: (0.30, 0.90),
            positive_cd45_overlap: (0.02, 0.08),
            negative_ck_overlap: (0.0, 0.12),
            coated_cd45_overlap: (0.30, 0.70),
            gaussian_amplitude: (5.0, 12.0),
            salt_pepper_fraction: 0.01,
            free_cd45_count: (0, 2),
        }
    }
}

impl BatchSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_samples == 0 {
            return Err(SynthError::BadSpec {
                field: "n_samples",
                message: "batch needs at least one sample".to_string(),
            });
        }
        if self.n_positive > self.n_samples {
            return Err(SynthError::BadSpec {
                field: "n_positive",
                message: format!(
                    "{} positives requested out of {} samples",
                    self.n_positive, self.n_samples
                ),
            });
        }
        if self.width < 160 || self.height < 160 {
            return Err(SynthError::BadSpec {
                field: "width/height",
                message: "batch scenes need at least 160x160 for the fixed layout".to_string(),
            });
        }
        Ok(())
    }

    /// Crop padding that keeps every plantable nucleus whole inside its
    /// stage-1 crop: a solved blob reaches at most `2r + 3` past the CK
    /// bounding box.
    pub fn recommended_crop_padding(&self) -> u32 {
        2 * self.dapi_radius.1 + 6
    }

    /// Named batch shapes. Seeds are fixed so the datasets are
    /// reproducible by name alone.
    pub fn preset(name: &str) -> Option<BatchSpec> {
        match name {
            "paper-train-shape" => Some(BatchSpec {
                n_samples: 46,
                n_positive: 36,
                seed: 7,
                ..BatchSpec::default()
            }),
            "paper-test-shape" => Some(BatchSpec {
                n_samples: 420,
                n_positive: 0,
                seed: 11,
                ..BatchSpec::default()
            }),
            "acceptance-200" => Some(BatchSpec {
                n_samples: 200,
                n_positive: 100,
                seed: 42,
                ..BatchSpec::default()
            }),
            "smoke" => Some(BatchSpec {
                n_samples: 10,
                n_positive: 5,
                seed: 3,
                ..BatchSpec::default()
            }),
            _ => None,
        }
    }

    pub fn preset_names() -> &'static [&'static str] {
        &["paper-train-shape", "paper-test-shape", "acceptance-200", "smoke"]
    }
}

/// Requested label per index: positives first, then negatives.
pub fn requested_labels(spec: &BatchSpec) -> Vec<bool> {
    (0..spec.n_samples).map(|i| i < spec.n_positive).collect()
}

fn draw_u64(rng: &mut ChaCha8Rng, lo: u64, hi: u64) -> u64 {
    debug_assert!(lo <= hi);
    lo + rng.next_u64() % (hi - lo + 1)
}

fn draw_f64(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    range.0 + unit_f64(rng) * (range.1 - range.0)
}

fn draw_u8(rng: &mut ChaCha8Rng, range: (u8, u8)) -> u8 {
    draw_u64(rng, range.0 as u64, range.1 as u64) as u8
}

fn draw_u32(rng: &mut ChaCha8Rng, range: (u32, u32)) -> u32 {
    draw_u64(rng, range.0 as u64, range.1 as u64) as u32
}

fn mix_sample_seed(seed: u64, index: usize, attempt: u32) -> u64 {
    SplitMix64::new(
        seed ^ (index as u64).wrapping_mul(0x9e3779b97f4a7c15)
            ^ ((attempt as u64) << 56),
    )
    .next()
}

/// Build the randomized scene for one sample.
fn build_scene(spec: &BatchSpec, index: usize, attempt: u32, positive: bool) -> SceneSpec {
    let mut sm = SplitMix64::new(mix_sample_seed(spec.seed, index, attempt));
    let mut rng = rng_from_seed(sm.next());
    let noise_seed = sm.next();

    let center = (spec.width as i64 / 2 + 28, spec.height as i64 / 2 + 28);
    let jitter = |rng: &mut ChaCha8Rng| draw_u64(rng, 0, 24) as i64 - 12;

    let mut scene = SceneSpec {
        sample_id: format!("sample_{index:05}"),
        seed: noise_seed,
        width: spec.width,
        height: spec.height,
        background: spec.background,
        ck: Vec::new(),
        dapi: Vec::new(),
        cd45: Vec::new(),
        noise: NoiseSpec::default(),
        flare: None,
    };

    let ck_disc = |rng: &mut ChaCha8Rng, scene: &mut SceneSpec| {
        let disc = DiscSpec {
            cx: (center.0 + jitter(rng)) as i32,
            cy: (center.1 + jitter(rng)) as i32,
            radius: draw_u32(rng, spec.ck_radius),
            intensity: draw_u8(rng, spec.ck_intensity),
        };
        scene.ck.push(disc);
    };
    let solved_dapi = |rng: &mut ChaCha8Rng, ck_overlap: f64, cd45_overlap: f64| {
        let radius = draw_u32(rng, spec.dapi_radius);
        DapiSpec {
            radius,
            intensity: draw_u8(rng, spec.dapi_intensity),
            placement: DapiPlacement::Solve {
                anchor_ck: 0,
                ck_overlap,
                cd45_overlap,
                cd45_radius: radius + draw_u32(rng, spec.cd45_extra_radius),
                cd45_intensity: draw_u8(rng, spec.cd45_intensity),
            },
        }
    };

    if positive {
        ck_disc(&mut rng, &mut scene);
        let overlap = draw_f64(&mut rng, spec.positive_ck_overlap);
        // Roughly half the positives get a trace of CD45 contact so the
        // planted distribution does not degenerate to exactly zero.
        let cd45 = if rng.next_u64() & 1 == 0 {
            0.0
        } else {
            draw_f64(&mut rng, spec.positive_cd45_overlap)
        };
        scene.dapi.push(solved_dapi(&mut rng, overlap, cd45));
    } else {
        match draw_u64(&mut rng, 0, 3) {
            0 => {
                // No CK at all; one or two free nuclei near the center.
                let n = draw_u64(&mut rng, 1, 2);
                let base = (
                    (spec.width as i64 / 2 - 8 + draw_u64(&mut rng, 0, 16) as i64) as i32,
                    (spec.height as i64 / 2 - 8 + draw_u64(&mut rng, 0, 16) as i64) as i32,
                );
                for k in 0..n {
                    scene.dapi.push(DapiSpec {
                        radius: draw_u32(&mut rng, spec.dapi_radius),
                        intensity: draw_u8(&mut rng, spec.dapi_intensity),
                        placement: DapiPlacement::At {
                            cx: base.0 + 44 * k as i32,
                            cy: base.1 + 44 * k as i32,
                        },
                    });
                }
            }
            1 => {
                // CK present, no nuclei anywhere.
                ck_disc(&mut rng, &mut scene);
            }
            2 => {
                // Nucleus barely touching the CK region.
                ck_disc(&mut rng, &mut scene);
                let overlap = draw_f64(&mut rng, spec.negative_ck_overlap);
                scene.dapi.push(solved_dapi(&mut rng, overlap, 0.0));
            }
            _ => {
                // CD45-coated nucleus well inside the CK region.
                ck_disc(&mut rng, &mut scene);
                let ck_overlap = draw_f64(&mut rng, spec.positive_ck_overlap);
                let cd45_overlap = draw_f64(&mut rng, spec.coated_cd45_overlap);
                scene.dapi.push(solved_dapi(&mut rng, ck_overlap, cd45_overlap));
            }
        }
    }

    // Free CD45 debris in the far corner; it never reaches the cluster.
    for _ in 0..draw_u32(&mut rng, spec.free_cd45_count) {
        let radius = draw_u32(&mut rng, spec.dapi_radius) + draw_u32(&mut rng, spec.cd45_extra_radius);
        scene.cd45.push(DiscSpec {
            cx: (16 + radius + draw_u32(&mut rng, (0, 24))) as i32,
            cy: (16 + radius + draw_u32(&mut rng, (0, 24))) as i32,
            radius,
            intensity: draw_u8(&mut rng, spec.cd45_intensity),
        });
    }

    scene.noise = match draw_u64(&mut rng, 0, 4) {
        0 => NoiseSpec::default(),
        4 => NoiseSpec {
            kind: NoiseKind::SaltPepper,
            amplitude: spec.salt_pepper_fraction,
        },
        _ => NoiseSpec {
            kind: NoiseKind::Gaussian,
            amplitude: draw_f64(&mut rng, spec.gaussian_amplitude),
        },
    };
    scene
}

/// Generate one batch sample, retrying with re-drawn parameters if a
/// particular draw is unplaceable or its derived label disagrees with the
/// requested one. The attempt counter feeds the seed mix, so retries are
/// as deterministic as first tries.
pub fn generate_sample(
    spec: &BatchSpec,
    params: &DecisionParams,
    index: usize,
    requested_positive: bool,
) -> Result<(ChannelSet, GroundTruth), SynthError> {
    let mut last = None;
    for attempt in 0..4 {
        let scene = build_scene(spec, index, attempt, requested_positive);
        match generate(&scene, params) {
            Ok((channels, truth)) => {
                if truth.positive == requested_positive {
                    return Ok((channels, truth));
                }
                last = Some(SynthError::Infeasible {
                    what: format!("sample {index}"),
                    detail: format!(
                        "derived label {} does not match requested {requested_positive}",
                        truth.positive
                    ),
                });
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt ran"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCandidate {
    pub ck_overlap: f64,
    pub cd45_overlap: f64,
    pub is_ctc: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSample {
    pub sample_id: String,
    pub label: bool,
    pub candidates: Vec<ManifestCandidate>,
}

/// Labels and planted values for a generated dataset; written alongside
/// the sample directories as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub params: DecisionParams,
    pub n_samples: usize,
    pub n_positive: usize,
    pub samples: Vec<ManifestSample>,
}

impl BatchManifest {
    pub fn labels(&self) -> BTreeMap<String, bool> {
        self.samples
            .iter()
            .map(|s| (s.sample_id.clone(), s.label))
            .collect()
    }

    /// Per-candidate overlap records for threshold calibration.
    pub fn calibration_records(&self) -> Vec<CalibrationRecord> {
        self.samples
            .iter()
            .flat_map(|s| &s.candidates)
            .map(|c| CalibrationRecord {
                p_ck_given_c: c.ck_overlap,
                p_cd45_given_c: c.cd45_overlap,
                label: c.is_ctc,
            })
            .collect()
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

fn io_err(sample: &str, e: impl std::fmt::Display) -> SynthError {
    SynthError::Io {
        sample: sample.to_string(),
        message: e.to_string(),
    }
}

/// Generate the whole batch onto disk: one directory per sample with the
/// three channel PNGs, `manifest.json`, and `calibration.jsonl` with one
/// labeled overlap record per planted candidate.
pub fn generate_batch(
    spec: &BatchSpec,
    params: &DecisionParams,
    out_dir: &Path,
) -> Result<BatchManifest, SynthError> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| io_err("<root>", e))?;

    let mut samples = Vec::with_capacity(spec.n_samples);
    for (index, requested) in requested_labels(spec).into_iter().enumerate() {
        let (channels, truth) = generate_sample(spec, params, index, requested)?;
        dataset::write_sample_dir(&out_dir.join(&channels.sample_id), &channels)
            .map_err(|e| io_err(&channels.sample_id, e))?;
        samples.push(ManifestSample {
            sample_id: channels.sample_id.clone(),
            label: truth.positive,
            candidates: truth
                .candidates
                .iter()
                .map(|c| ManifestCandidate {
                    ck_overlap: c.ck_overlap,
                    cd45_overlap: c.cd45_overlap,
                    is_ctc: c.is_ctc,
                })
                .collect(),
        });
    }

    let manifest = BatchManifest {
        params: *params,
        n_samples: spec.n_samples,
        n_positive: samples.iter().filter(|s| s.label).count(),
        samples,
    };
    let manifest_json =
        serde_json::to_string_pretty(&manifest).map_err(|e| io_err("manifest", e))?;
    std::fs::write(out_dir.join(dataset::MANIFEST_FILE), manifest_json)
        .map_err(|e| io_err("manifest", e))?;

    let mut calibration = std::io::BufWriter::new(
        std::fs::File::create(out_dir.join("calibration.jsonl"))
            .map_err(|e| io_err("calibration", e))?,
    );
    for record in manifest.calibration_records() {
        let line = serde_json::to_string(&record).map_err(|e| io_err("calibration", e))?;
        writeln!(calibration, "{line}").map_err(|e| io_err("calibration", e))?;
    }
    calibration.flush().map_err(|e| io_err("calibration", e))?;
    Ok(manifest)
}
