//! Connected-component labeling, blob statistics and the built-in
//! classical detector backends for stage 1 (CK boxes) and stage 2 (DAPI
//! masks).
//!
//! Components use 8-connectivity: round nuclei with anti-aliased edges
//! fragment under 4-connectivity.

use serde::{Deserialize, Serialize};

use crate::detector::{Detection, DetectionLabel};
use crate::raster::{BinaryMask, BoundingBox, GrayImage};
use crate::threshold::binarize_otsu;

/// One maximal 8-connected component of a mask.
#[derive(Debug, Clone)]
pub struct Blob {
    /// Component pixels on the full source grid.
    pub mask: BinaryMask,
    /// Tight bounding box of `mask`.
    pub bbox: BoundingBox,
    pub area: usize,
    pub centroid: (f64, f64),
}

impl Blob {
    /// Diameter of the circle with the same area, in pixels:
    /// `2 * sqrt(area / pi)`.
    pub fn equivalent_diameter(&self) -> f64 {
        2.0 * (self.area as f64 / std::f64::consts::PI).sqrt()
    }
}

/// Minimum-diameter gate for blobs, active only when the optics
/// calibration (`microns_per_pixel`) is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeFilter {
    /// Blobs at or below this equivalent diameter are dropped.
    pub min_diameter_um: f64,
    /// Pixel pitch; `None` disables the filter rather than guessing optics.
    pub microns_per_pixel: Option<f64>,
}

impl Default for SizeFilter {
    fn default() -> Self {
        Self {
            min_diameter_um: 5.0,
            microns_per_pixel: None,
        }
    }
}

/// Settings shared by the classical stage-1/stage-2 backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalDetectorConfig {
    #[serde(default)]
    pub size_filter: SizeFilter,
    /// Stage-2 detections scoring below this are discarded.
    #[serde(default = "default_dapi_score_threshold")]
    pub dapi_score_threshold: f64,
}

fn default_dapi_score_threshold() -> f64 {
    0.9
}

impl Default for ClassicalDetectorConfig {
    fn default() -> Self {
        Self {
            size_filter: SizeFilter::default(),
            dapi_score_threshold: default_dapi_score_threshold(),
        }
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut i: u32) -> u32 {
        while self.parent[i as usize] != i {
            // Path halving.
            self.parent[i as usize] = self.parent[self.parent[i as usize] as usize];
            i = self.parent[i as usize];
        }
        i
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[rb.max(ra) as usize] = rb.min(ra);
        }
    }
}

/// Partition the member pixels into maximal 8-connected components,
/// ordered by descending area with ties broken by the (y, x) of the
/// top-left bounding-box corner so repeated runs list blobs identically.
pub fn connected_components(mask: &BinaryMask) -> Vec<Blob> {
    let (width, height) = mask.dims();
    let stride = width as usize;
    let bits = mask.bits();
    let mut ds = DisjointSet::new(bits.len());

    for y in 0..height {
        for x in 0..width {
            let i = y as usize * stride + x as usize;
            if !bits[i] {
                continue;
            }
            // Union with the already-visited half of the 8-neighborhood:
            // W, NW, N, NE.
            if x > 0 && bits[i - 1] {
                ds.union(i as u32, (i - 1) as u32);
            }
            if y > 0 {
                let up = i - stride;
                if x > 0 && bits[up - 1] {
                    ds.union(i as u32, (up - 1) as u32);
                }
                if bits[up] {
                    ds.union(i as u32, up as u32);
                }
                if x + 1 < width && bits[up + 1] {
                    ds.union(i as u32, (up + 1) as u32);
                }
            }
        }
    }

    struct Acc {
        mask: BinaryMask,
        min_x: u32,
        min_y: u32,
        max_x: u32,
        max_y: u32,
        area: usize,
        sum_x: u64,
        sum_y: u64,
    }

    let mut by_root: std::collections::HashMap<u32, Acc> = std::collections::HashMap::new();
    for y in 0..height {
        for x in 0..width {
            let i = y as usize * stride + x as usize;
            if !bits[i] {
                continue;
            }
            let root = ds.find(i as u32);
            let acc = by_root.entry(root).or_insert_with(|| Acc {
                mask: BinaryMask::empty(width, height).expect("nonzero dims"),
                min_x: x,
                min_y: y,
                max_x: x,
                max_y: y,
                area: 0,
                sum_x: 0,
                sum_y: 0,
            });
            acc.mask.set(x, y, true);
            acc.min_x = acc.min_x.min(x);
            acc.min_y = acc.min_y.min(y);
            acc.max_x = acc.max_x.max(x);
            acc.max_y = acc.max_y.max(y);
            acc.area += 1;
            acc.sum_x += x as u64;
            acc.sum_y += y as u64;
        }
    }

    let mut blobs: Vec<Blob> = by_root
        .into_values()
        .map(|acc| Blob {
            bbox: BoundingBox::new(
                acc.min_x as i32,
                acc.min_y as i32,
                acc.max_x - acc.min_x + 1,
                acc.max_y - acc.min_y + 1,
            ),
            centroid: (
                acc.sum_x as f64 / acc.area as f64,
                acc.sum_y as f64 / acc.area as f64,
            ),
            area: acc.area,
            mask: acc.mask,
        })
        .collect();
    blobs.sort_by(|a, b| {
        b.area
            .cmp(&a.area)
            .then(a.bbox.y.cmp(&b.bbox.y))
            .then(a.bbox.x.cmp(&b.bbox.x))
    });
    blobs
}

/// Drop blobs whose physical equivalent diameter is not above the filter
/// minimum. Identity when no pixel pitch is configured.
pub fn filter_by_size(blobs: Vec<Blob>, filter: &SizeFilter) -> Vec<Blob> {
    let Some(mpp) = filter.microns_per_pixel else {
        return blobs;
    };
    blobs
        .into_iter()
        .filter(|b| b.equivalent_diameter() * mpp > filter.min_diameter_um)
        .collect()
}

/// Mean intensity of the source image over the blob pixels, normalized to
/// [0, 1]. This is the classical backends' detection score; it only feeds
/// the stage-2 acceptance threshold and the confidence product.
fn foreground_score(img: &GrayImage, mask: &BinaryMask) -> f64 {
    let (mut sum, mut count) = (0u64, 0u64);
    for (i, &b) in mask.bits().iter().enumerate() {
        if b {
            sum += img.pixels()[i] as u64;
            count += 1;
        }
    }
    debug_assert!(count > 0, "scored blob must have pixels");
    sum as f64 / count as f64 / 255.0
}

/// Classical stage 1: Otsu-binarize the CK layer and report one box per
/// surviving component. A degenerate (constant) layer means no CK signal,
/// so it yields an empty list rather than an error.
pub fn detect_ck_classical(ck: &GrayImage, cfg: &ClassicalDetectorConfig) -> Vec<Detection> {
    let Ok(mask) = binarize_otsu(ck) else {
        return Vec::new();
    };
    let blobs = filter_by_size(connected_components(&mask), &cfg.size_filter);
    blobs
        .into_iter()
        .map(|blob| Detection {
            score: foreground_score(ck, &blob.mask),
            bbox: blob.bbox,
            mask: None,
            label: DetectionLabel::Ck,
        })
        .collect()
}

/// Classical stage 2 over a stage-1 crop of the DAPI layer: B/W transform
/// (Otsu), components, size filter, then the detection-score gate
/// (`dapi_score_threshold`, default 0.9). Every surviving detection
/// carries its component mask on the crop grid.
pub fn detect_dapi_classical(
    dapi_crop: &GrayImage,
    cfg: &ClassicalDetectorConfig,
) -> Vec<Detection> {
    let Ok(mask) = binarize_otsu(dapi_crop) else {
        return Vec::new();
    };
    let blobs = filter_by_size(connected_components(&mask), &cfg.size_filter);
    blobs
        .into_iter()
        .filter_map(|blob| {
            let score = foreground_score(dapi_crop, &blob.mask);
            (score >= cfg.dapi_score_threshold).then_some(Detection {
                score,
                bbox: blob.bbox,
                mask: Some(blob.mask),
                label: DetectionLabel::Dapi,
            })
        })
        .collect()
}
