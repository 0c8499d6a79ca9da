//! Deterministic synthetic multi-channel samples with exact ground truth;
//! the verification oracle for the whole pipeline.
//!
//! Scenes are built from rasterized discs. A DAPI blob can be placed at a
//! fixed center or *solved*: the generator scans integer centers until
//! the achieved pixel overlap with the CK layer (and, via a companion
//! CD45 disc, with the CD45 layer) is within one pixel of the requested
//! fraction times the blob area. Ground truth is then derived from the
//! emitted noise-free masks — never from the request — using the same
//! overlap arithmetic the decision layer runs, so the planted answer and
//! the pipeline's answer can only diverge if the pipeline itself does.
//!
//! Determinism: rasterization is integer-only and noise comes from
//! ChaCha8 keyed through SplitMix64 on the scene seed. Gaussian noise is
//! the Irwin–Hall sum of twelve 53-bit uniforms (no transcendental
//! functions), so identical specs give bit-identical channels across
//! platforms and runs.

pub mod batch;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::{decide, overlap_fraction, DecisionParams};
use crate::raster::{BinaryMask, ChannelSet, GrayImage};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("{what} does not fit within the {width}x{height} scene")]
    OutOfBounds {
        what: String,
        width: u32,
        height: u32,
    },
    #[error("infeasible placement for {what}: {detail}")]
    Infeasible { what: String, detail: String },
    #[error("bad scene spec: {field}: {message}")]
    BadSpec { field: &'static str, message: String },
    #[error("i/o failure writing {sample}: {message}")]
    Io { sample: String, message: String },
}

/// A filled disc on one layer; membership is `dx^2 + dy^2 <= radius^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscSpec {
    pub cx: i32,
    pub cy: i32,
    pub radius: u32,
    pub intensity: u8,
}

/// How a DAPI blob gets its position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DapiPlacement {
    /// Fixed center, no overlap targets (free-standing nucleus).
    At { cx: i32, cy: i32 },
    /// Solved so that the CK overlap fraction hits `ck_overlap`, with an
    /// optional companion CD45 disc solved to hit `cd45_overlap`.
    Solve {
        anchor_ck: usize,
        ck_overlap: f64,
        cd45_overlap: f64,
        /// Companion disc geometry; used only when `cd45_overlap > 0`.
        cd45_radius: u32,
        cd45_intensity: u8,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DapiSpec {
    pub radius: u32,
    pub intensity: u8,
    pub placement: DapiPlacement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    /// Zero-mean, `amplitude` is the standard deviation in intensity
    /// levels; bounded at six sigma by construction.
    Gaussian,
    /// `amplitude` is the fraction of pixels forced to 0 or 255.
    SaltPepper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default)]
    pub kind: NoiseKind,
    #[serde(default)]
    pub amplitude: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            kind: NoiseKind::None,
            amplitude: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Ck,
    Dapi,
    Cd45,
}

/// Linear intensity ramp added to one channel, mimicking a camera flare.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlareSpec {
    pub channel: ChannelKind,
    pub peak: u8,
    pub horizontal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default)]
    pub sample_id: String,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_background")]
    pub background: u8,
    #[serde(default)]
    pub ck: Vec<DiscSpec>,
    #[serde(default)]
    pub dapi: Vec<DapiSpec>,
    /// Free-standing CD45 discs, independent of any DAPI blob.
    #[serde(default)]
    pub cd45: Vec<DiscSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub flare: Option<FlareSpec>,
}

fn default_background() -> u8 {
    20
}

/// Exact per-blob answers derived from the emitted noise-free masks.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCandidate {
    pub dapi_index: usize,
    pub mask: BinaryMask,
    pub ck_overlap: f64,
    pub cd45_overlap: f64,
    pub is_ctc: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub ck_mask: BinaryMask,
    pub cd45_mask: BinaryMask,
    pub candidates: Vec<PlantedCandidate>,
    /// Whether any candidate is a CTC under `params`.
    pub positive: bool,
    pub params: DecisionParams,
}

// ---------------------------------------------------------------------------
// Seeding and portable random draws
// ---------------------------------------------------------------------------

/// SplitMix64; spelled out so the key derivation is pinned here rather
/// than to any library's seeding convention.
pub(crate) struct SplitMix64(u64);

impl SplitMix64 {
    pub(crate) fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub(crate) fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }
}

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    let mut sm = SplitMix64::new(seed);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&sm.next().to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Uniform in [0, 1) from the top 53 bits; exact IEEE arithmetic only.
pub(crate) fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

// ---------------------------------------------------------------------------
// Disc rasterization and the placement solver
// ---------------------------------------------------------------------------

fn disc_fits(cx: i64, cy: i64, r: i64, width: u32, height: u32) -> bool {
    cx - r >= 0 && cy - r >= 0 && cx + r < width as i64 && cy + r < height as i64
}

fn disc_mask(width: u32, height: u32, cx: i64, cy: i64, r: i64) -> BinaryMask {
    let mut mask = BinaryMask::empty(width, height).expect("nonzero dims");
    for y in (cy - r).max(0)..=(cy + r).min(height as i64 - 1) {
        for x in (cx - r).max(0)..=(cx + r).min(width as i64 - 1) {
            let (dx, dy) = (x - cx, y - cy);
            if dx * dx + dy * dy <= r * r {
                mask.set(x as u32, y as u32, true);
            }
        }
    }
    mask
}

/// Pixel count of a fully in-bounds disc of radius `r`.
fn disc_area(r: i64) -> u64 {
    let mut area = 0u64;
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                area += 1;
            }
        }
    }
    area
}

/// 8-neighborhood dilation by one pixel; a disc disjoint from the dilated
/// set cannot touch the original even diagonally, so components stay
/// separate under 8-connectivity.
fn dilate8(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 && mask.get(nx as u32, ny as u32) {
                    return true;
                }
            }
        }
        false
    })
}

/// How many pixels of a disc at (cx, cy) satisfy `covered`, and whether
/// the disc touches `forbidden`.
fn scan_disc<F: Fn(u32, u32) -> bool>(
    width: u32,
    height: u32,
    cx: i64,
    cy: i64,
    r: i64,
    forbidden: Option<&BinaryMask>,
    covered: F,
) -> Option<u64> {
    let mut count = 0u64;
    for y in (cy - r).max(0)..=(cy + r).min(height as i64 - 1) {
        for x in (cx - r).max(0)..=(cx + r).min(width as i64 - 1) {
            let (dx, dy) = (x - cx, y - cy);
            if dx * dx + dy * dy > r * r {
                continue;
            }
            let (ux, uy) = (x as u32, y as u32);
            if let Some(f) = forbidden {
                if f.get(ux, uy) {
                    return None;
                }
            }
            if covered(ux, uy) {
                count += 1;
            }
        }
    }
    Some(count)
}

/// Scan integer centers around `around` (a tight bbox of the relevant
/// target region, pre-expanded by the caller) for the placement whose
/// covered-pixel count is closest to `target_count`. First minimum in
/// (cy, cx) order wins, so the result is reproducible. Fails when no
/// allowed position lands within one pixel of the target.
#[allow(clippy::too_many_arguments)]
fn solve_disc_placement<F: Fn(u32, u32) -> bool>(
    what: &str,
    width: u32,
    height: u32,
    around: (i64, i64, i64, i64), // (min_x, min_y, max_x, max_y) of scan centers
    r: i64,
    forbidden: Option<&BinaryMask>,
    covered: F,
    target_count: f64,
) -> Result<(i32, i32), SynthError> {
    let (min_x, min_y, max_x, max_y) = around;
    let mut best: Option<((i32, i32), f64)> = None;
    for cy in min_y..=max_y {
        for cx in min_x..=max_x {
            if !disc_fits(cx, cy, r, width, height) {
                continue;
            }
            let Some(count) = scan_disc(width, height, cx, cy, r, forbidden, &covered) else {
                continue; // touches a forbidden region
            };
            let err = (count as f64 - target_count).abs();
            if best.is_none_or(|(_, be)| err < be) {
                best = Some(((cx as i32, cy as i32), err));
            }
        }
    }
    match best {
        Some((center, err)) if err <= 1.0 => Ok(center),
        Some((_, err)) => Err(SynthError::Infeasible {
            what: what.to_string(),
            detail: format!(
                "closest achievable coverage is {err:.1} pixels away from the target {target_count:.1}"
            ),
        }),
        None => Err(SynthError::Infeasible {
            what: what.to_string(),
            detail: "no in-bounds, non-touching position exists in the scan region".to_string(),
        }),
    }
}

// ---------------------------------------------------------------------------
// Scene generation
// ---------------------------------------------------------------------------

fn add_disc(pixels: &mut [u8], width: u32, height: u32, disc: &DiscSpec) {
    let (cx, cy, r) = (disc.cx as i64, disc.cy as i64, disc.radius as i64);
    for y in (cy - r).max(0)..=(cy + r).min(height as i64 - 1) {
        for x in (cx - r).max(0)..=(cx + r).min(width as i64 - 1) {
            let (dx, dy) = (x - cx, y - cy);
            if dx * dx + dy * dy <= r * r {
                let i = y as usize * width as usize + x as usize;
                pixels[i] = pixels[i].max(disc.intensity);
            }
        }
    }
}

fn apply_flare(pixels: &mut [u8], width: u32, height: u32, flare: &FlareSpec) {
    for y in 0..height as usize {
        for x in 0..width as usize {
            let (num, den) = if flare.horizontal {
                (x as u64, (width.max(2) - 1) as u64)
            } else {
                (y as u64, (height.max(2) - 1) as u64)
            };
            let add = (flare.peak as u64 * num / den) as u8;
            let i = y * width as usize + x;
            pixels[i] = pixels[i].saturating_add(add);
        }
    }
}

fn apply_noise(pixels: &mut [u8], noise: &NoiseSpec, rng: &mut ChaCha8Rng) {
    match noise.kind {
        NoiseKind::None => {}
        NoiseKind::Gaussian => {
            for p in pixels.iter_mut() {
                let mut sum = 0.0;
                for _ in 0..12 {
                    sum += unit_f64(rng);
                }
                let delta = (noise.amplitude * (sum - 6.0)).round();
                *p = (*p as f64 + delta).clamp(0.0, 255.0) as u8;
            }
        }
        NoiseKind::SaltPepper => {
            for p in pixels.iter_mut() {
                if unit_f64(rng) < noise.amplitude {
                    *p = if rng.next_u64() & 1 == 0 { 0 } else { 255 };
                }
            }
        }
    }
}

struct PlacedScene {
    dapi_discs: Vec<DiscSpec>,
    dapi_masks: Vec<BinaryMask>,
    companion_cd45: Vec<DiscSpec>,
    ck_mask: BinaryMask,
    cd45_mask: BinaryMask,
}

fn validate_spec(spec: &SceneSpec) -> Result<(), SynthError> {
    if spec.width == 0 || spec.height == 0 {
        return Err(SynthError::BadSpec {
            field: "width/height",
            message: format!("scene dimensions must be nonzero, got {}x{}", spec.width, spec.height),
        });
    }
    for (i, plan) in spec.dapi.iter().enumerate() {
        if plan.radius == 0 {
            return Err(SynthError::BadSpec {
                field: "dapi.radius",
                message: format!("dapi blob {i} has zero radius"),
            });
        }
        if let DapiPlacement::Solve {
            anchor_ck,
            ck_overlap,
            cd45_overlap,
            cd45_radius,
            ..
        } = plan.placement
        {
            if anchor_ck >= spec.ck.len() {
                return Err(SynthError::BadSpec {
                    field: "dapi.placement.anchor_ck",
                    message: format!(
                        "dapi blob {i} anchors to ck {anchor_ck} but the scene has {}",
                        spec.ck.len()
                    ),
                });
            }
            for (name, v) in [("ck_overlap", ck_overlap), ("cd45_overlap", cd45_overlap)] {
                if !(0.0..=1.0).contains(&v) || v.is_nan() {
                    return Err(SynthError::BadSpec {
                        field: "dapi.placement",
                        message: format!("dapi blob {i}: {name} {v} outside [0,1]"),
                    });
                }
            }
            if cd45_overlap > 0.0 && cd45_radius == 0 {
                return Err(SynthError::BadSpec {
                    field: "dapi.placement.cd45_radius",
                    message: format!("dapi blob {i} requests CD45 overlap with zero radius"),
                });
            }
        }
    }
    Ok(())
}

/// Solve all placements for a scene. Separated from rasterization so the
/// ground truth can be read off the ideal masks directly.
fn place_scene(spec: &SceneSpec) -> Result<PlacedScene, SynthError> {
    let (w, h) = (spec.width, spec.height);

    let mut ck_mask = BinaryMask::empty(w, h).expect("nonzero dims");
    for (i, disc) in spec.ck.iter().enumerate() {
        if !disc_fits(disc.cx as i64, disc.cy as i64, disc.radius as i64, w, h) {
            return Err(SynthError::OutOfBounds {
                what: format!("ck disc {i} at ({},{}) r={}", disc.cx, disc.cy, disc.radius),
                width: w,
                height: h,
            });
        }
        ck_mask.union_with(&disc_mask(w, h, disc.cx as i64, disc.cy as i64, disc.radius as i64));
    }

    let mut cd45_mask = BinaryMask::empty(w, h).expect("nonzero dims");
    for (i, disc) in spec.cd45.iter().enumerate() {
        if !disc_fits(disc.cx as i64, disc.cy as i64, disc.radius as i64, w, h) {
            return Err(SynthError::OutOfBounds {
                what: format!("cd45 disc {i} at ({},{}) r={}", disc.cx, disc.cy, disc.radius),
                width: w,
                height: h,
            });
        }
        cd45_mask.union_with(&disc_mask(w, h, disc.cx as i64, disc.cy as i64, disc.radius as i64));
    }

    // Pass 1: DAPI blobs. `occupied` keeps them 8-disconnected from each
    // other so stage 2 sees one component per blob.
    let mut occupied = BinaryMask::empty(w, h).expect("nonzero dims");
    let mut dapi_discs = Vec::new();
    let mut dapi_masks = Vec::new();
    for (i, plan) in spec.dapi.iter().enumerate() {
        let r = plan.radius as i64;
        let center = match plan.placement {
            DapiPlacement::At { cx, cy } => {
                if !disc_fits(cx as i64, cy as i64, r, w, h) {
                    return Err(SynthError::OutOfBounds {
                        what: format!("dapi disc {i} at ({cx},{cy}) r={}", plan.radius),
                        width: w,
                        height: h,
                    });
                }
                let mask = disc_mask(w, h, cx as i64, cy as i64, r);
                if mask.intersection_area(&occupied).expect("same dims") > 0 {
                    return Err(SynthError::Infeasible {
                        what: format!("dapi disc {i}"),
                        detail: "touches another dapi blob".to_string(),
                    });
                }
                (cx, cy)
            }
            DapiPlacement::Solve {
                anchor_ck,
                ck_overlap,
                ..
            } => {
                let anchor = &spec.ck[anchor_ck];
                let reach = anchor.radius as i64 + r + 3;
                let around = (
                    anchor.cx as i64 - reach,
                    anchor.cy as i64 - reach,
                    anchor.cx as i64 + reach,
                    anchor.cy as i64 + reach,
                );
                let target = ck_overlap * disc_area(r) as f64;
                solve_disc_placement(
                    &format!("dapi blob {i} (ck_overlap {ck_overlap})"),
                    w,
                    h,
                    around,
                    r,
                    Some(&occupied),
                    |x, y| ck_mask.get(x, y),
                    target,
                )?
            }
        };
        let mask = disc_mask(w, h, center.0 as i64, center.1 as i64, r);
        occupied.union_with(&dilate8(&mask));
        dapi_discs.push(DiscSpec {
            cx: center.0,
            cy: center.1,
            radius: plan.radius,
            intensity: plan.intensity,
        });
        dapi_masks.push(mask);
    }

    // Pass 2: companion CD45 discs against the now-fixed DAPI masks,
    // accounting for coverage the free CD45 discs already provide.
    let mut companion_cd45 = Vec::new();
    for (i, plan) in spec.dapi.iter().enumerate() {
        let DapiPlacement::Solve {
            cd45_overlap,
            cd45_radius,
            cd45_intensity,
            ..
        } = plan.placement
        else {
            continue;
        };
        if cd45_overlap == 0.0 {
            continue;
        }
        let dapi = &dapi_masks[i];
        let base = cd45_mask.intersection_area(dapi).expect("same dims") as f64;
        let target = cd45_overlap * dapi.area() as f64 - base;
        let r = cd45_radius as i64;
        let disc = &dapi_discs[i];
        let reach = plan.radius as i64 + r + 3;
        let around = (
            disc.cx as i64 - reach,
            disc.cy as i64 - reach,
            disc.cx as i64 + reach,
            disc.cy as i64 + reach,
        );
        let cd45_snapshot = cd45_mask.clone();
        let center = solve_disc_placement(
            &format!("cd45 companion of dapi blob {i} (cd45_overlap {cd45_overlap})"),
            w,
            h,
            around,
            r,
            None,
            // Count only new coverage of this blob's pixels.
            |x, y| dapi.get(x, y) && !cd45_snapshot.get(x, y),
            target,
        )?;
        cd45_mask.union_with(&disc_mask(w, h, center.0 as i64, center.1 as i64, r));
        companion_cd45.push(DiscSpec {
            cx: center.0,
            cy: center.1,
            radius: cd45_radius,
            intensity: cd45_intensity,
        });
    }

    Ok(PlacedScene {
        dapi_discs,
        dapi_masks,
        companion_cd45,
        ck_mask,
        cd45_mask,
    })
}

/// Generate one scene: the three channels plus ground truth under
/// `params`. Identical specs produce bit-identical channels.
pub fn generate(
    spec: &SceneSpec,
    params: &DecisionParams,
) -> Result<(ChannelSet, GroundTruth), SynthError> {
    validate_spec(spec)?;
    let placed = place_scene(spec)?;
    let (w, h) = (spec.width, spec.height);
    let size = w as usize * h as usize;

    let mut ck_pixels = vec![spec.background; size];
    for disc in &spec.ck {
        add_disc(&mut ck_pixels, w, h, disc);
    }
    let mut dapi_pixels = vec![spec.background; size];
    for disc in &placed.dapi_discs {
        add_disc(&mut dapi_pixels, w, h, disc);
    }
    let mut cd45_pixels = vec![spec.background; size];
    for disc in spec.cd45.iter().chain(&placed.companion_cd45) {
        add_disc(&mut cd45_pixels, w, h, disc);
    }

    if let Some(flare) = &spec.flare {
        let target = match flare.channel {
            ChannelKind::Ck => &mut ck_pixels,
            ChannelKind::Dapi => &mut dapi_pixels,
            ChannelKind::Cd45 => &mut cd45_pixels,
        };
        apply_flare(target, w, h, flare);
    }

    // One noise stream, channels in fixed order.
    let mut rng = rng_from_seed(spec.seed);
    apply_noise(&mut ck_pixels, &spec.noise, &mut rng);
    apply_noise(&mut dapi_pixels, &spec.noise, &mut rng);
    apply_noise(&mut cd45_pixels, &spec.noise, &mut rng);

    let channels = ChannelSet::new(
        spec.sample_id.clone(),
        GrayImage::new(w, h, ck_pixels).expect("validated dims"),
        GrayImage::new(w, h, dapi_pixels).expect("validated dims"),
        GrayImage::new(w, h, cd45_pixels).expect("validated dims"),
    )
    .expect("all channels share scene dims");

    let mut candidates = Vec::new();
    for (i, mask) in placed.dapi_masks.iter().enumerate() {
        let ck_overlap =
            overlap_fraction(&placed.ck_mask, mask).expect("dapi masks are nonempty");
        let cd45_overlap =
            overlap_fraction(&placed.cd45_mask, mask).expect("dapi masks are nonempty");
        candidates.push(PlantedCandidate {
            dapi_index: i,
            mask: mask.clone(),
            ck_overlap,
            cd45_overlap,
            is_ctc: decide(ck_overlap, cd45_overlap, params),
        });
    }
    let positive = candidates.iter().any(|c| c.is_ctc);
    Ok((
        channels,
        GroundTruth {
            ck_mask: placed.ck_mask,
            cd45_mask: placed.cd45_mask,
            candidates,
            positive,
            params: *params,
        },
    ))
}
