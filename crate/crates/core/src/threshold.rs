//! Otsu's dynamic threshold and the strict `p > t` binarization used for
//! the CD45 layer and the classical detector backends.
//!
//! The threshold argmax is evaluated in exact integer arithmetic so the
//! selected `t` never depends on float summation order: for a split into
//! the classes `{p <= t}` and `{p > t}` with counts `w0`, `w1` and
//! intensity sums `s0`, `s1`, the between-class variance is proportional
//! to `(s*w0 - n*s0)^2 / (w0*w1)`, which is compared across candidate
//! thresholds as a ratio of unsigned integers.

use std::cmp::Ordering;

use thiserror::Error;

use crate::raster::{BinaryMask, GrayImage};

#[derive(Debug, Error, PartialEq)]
pub enum ThresholdError {
    /// Every pixel has the same intensity, so no foreground/background
    /// split exists. Callers that treat this as "no signal" should map it
    /// to an empty mask explicitly.
    #[error("degenerate histogram: all pixels have intensity {value}")]
    DegenerateHistogram { value: u8 },
}

/// Outcome of an Otsu scan over one image.
#[derive(Debug, Clone)]
pub struct OtsuResult {
    /// Selected threshold; the foreground is `{p > t}`.
    pub t: u8,
    /// Between-class variance at `t`, for reporting.
    pub between_class_variance: f64,
    /// Intensity histogram of the source image; sums to its pixel count.
    pub histogram: [u64; 256],
}

impl OtsuResult {
    /// Means of the two classes `{p <= t}` and `{p > t}`.
    pub fn class_means(&self) -> (f64, f64) {
        let t = self.t as usize;
        let (mut w0, mut s0, mut w1, mut s1) = (0u64, 0u64, 0u64, 0u64);
        for (i, &count) in self.histogram.iter().enumerate() {
            if i <= t {
                w0 += count;
                s0 += i as u64 * count;
            } else {
                w1 += count;
                s1 += i as u64 * count;
            }
        }
        (s0 as f64 / w0 as f64, s1 as f64 / w1 as f64)
    }

    /// Distance between the class means. Small separations mean the split
    /// found structure in noise rather than a real signal; pipeline-level
    /// gates use this to treat such images as empty.
    pub fn class_separation(&self) -> f64 {
        let (m0, m1) = self.class_means();
        m1 - m0
    }
}

/// Exact comparison of the nonnegative fractions `p1/q1` and `p2/q2`
/// without forming the cross products, which would overflow u128 for
/// large images. Classic continued-fraction descent: compare integer
/// parts, then recurse on the reciprocals of the fractional parts with
/// the ordering flipped.
fn ratio_cmp(mut p1: u128, mut q1: u128, mut p2: u128, mut q2: u128) -> Ordering {
    debug_assert!(q1 > 0 && q2 > 0);
    let mut flipped = false;
    loop {
        let (d1, d2) = (p1 / q1, p2 / q2);
        if d1 != d2 {
            let ord = d1.cmp(&d2);
            return if flipped { ord.reverse() } else { ord };
        }
        let (r1, r2) = (p1 % q1, p2 % q2);
        match (r1, r2) {
            (0, 0) => return Ordering::Equal,
            (0, _) => return if flipped { Ordering::Greater } else { Ordering::Less },
            (_, 0) => return if flipped { Ordering::Less } else { Ordering::Greater },
            _ => {
                // a + r1/q1 vs a + r2/q2  <=>  reverse(q1/r1 vs q2/r2)
                (p1, q1, p2, q2) = (q1, r1, q2, r2);
                flipped = !flipped;
            }
        }
    }
}

pub fn histogram(img: &GrayImage) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &p in img.pixels() {
        hist[p as usize] += 1;
    }
    hist
}

/// Otsu's method: the threshold maximizing between-class variance, with
/// ties broken toward the smallest `t` so the result is deterministic.
pub fn otsu_threshold(img: &GrayImage) -> Result<OtsuResult, ThresholdError> {
    let hist = histogram(img);
    let n: u64 = img.pixels().len() as u64;
    let s: u128 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as u128 * c as u128)
        .sum();

    // best = (t, numerator, denominator) of the variance ratio.
    let mut best: Option<(u8, u128, u128)> = None;
    let (mut w0, mut s0) = (0u128, 0u128);
    for t in 0..=255u16 {
        w0 += hist[t as usize] as u128;
        s0 += t as u128 * hist[t as usize] as u128;
        let w1 = n as u128 - w0;
        if w0 == 0 {
            continue;
        }
        if w1 == 0 {
            break;
        }
        // |s0/w0 - s1/w1| scaled: a = |s*w0 - n*s0|, variance ∝ a²/(w0*w1).
        let a = (s * w0).abs_diff(n as u128 * s0);
        let num = a * a;
        let den = w0 * w1;
        let better = match &best {
            None => true,
            Some((_, bn, bd)) => ratio_cmp(num, den, *bn, *bd) == Ordering::Greater,
        };
        if better {
            best = Some((t as u8, num, den));
        }
    }

    let (t, num, den) = best.ok_or_else(|| {
        let value = hist
            .iter()
            .position(|&c| c > 0)
            .expect("image is nonempty") as u8;
        ThresholdError::DegenerateHistogram { value }
    })?;
    let between_class_variance = num as f64 / (den as f64 * (n as f64) * (n as f64));
    Ok(OtsuResult {
        t,
        between_class_variance,
        histogram: hist,
    })
}

/// Map every pixel to 255 when strictly above `t`, else 0.
pub fn apply_threshold(img: &GrayImage, t: u8) -> GrayImage {
    let pixels = img
        .pixels()
        .iter()
        .map(|&p| if p > t { 255 } else { 0 })
        .collect();
    GrayImage::new(img.width(), img.height(), pixels).expect("same dimensions")
}

/// Otsu threshold followed by the strict binarization, lifted to a mask.
pub fn binarize_otsu(img: &GrayImage) -> Result<BinaryMask, ThresholdError> {
    let otsu = otsu_threshold(img)?;
    Ok(apply_threshold(img, otsu.t)
        .to_mask()
        .expect("thresholded image contains only 0 and 255"))
}
