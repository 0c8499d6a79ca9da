//! Stage 3 and the final decision layer: overlap fractions, the r1/r2
//! classification rule, the confidence product, and grid-search
//! calibration of (r1, r2) against labeled overlap records.
//!
//! Two rule semantics are shipped because the upstream method statement
//! is self-contradictory about CD45. Its prose criteria require a CTC to
//! be CD45-negative, while its printed decision branches *confirm* a CTC
//! when CD45 overlap exceeds r2. `Exclusionary` (the default) follows the
//! biology: CD45 marks leukocytes, so overlap above r2 disqualifies a
//! candidate. `PaperLiteral` reproduces the printed branches verbatim for
//! comparison runs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{BinaryMask, RasterError};

#[derive(Debug, Error, PartialEq)]
pub enum DecisionError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("zero-area candidate mask (degenerate detection)")]
    ZeroAreaCandidate,
    #[error("{field}: must be within [{lo}, {hi}], got {value}")]
    ParamOutOfRange {
        field: &'static str,
        lo: f64,
        hi: f64,
        value: f64,
    },
    #[error("uncalibratable: labeled set needs both positive and negative examples")]
    Uncalibratable,
    #[error("calibration needs at least one labeled record")]
    EmptyCalibrationSet,
    #[error("calibration record {index}: overlap {value} outside [0,1]")]
    BadCalibrationRecord { index: usize, value: f64 },
}

/// How CD45 overlap enters the rule and the confidence product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Semantics {
    /// CD45 coverage above r2 disqualifies the candidate; the confidence
    /// product uses `1 - p(CD45|C)` so CD45-free candidates score high.
    #[default]
    Exclusionary,
    /// The published branch structure verbatim: CK overlap `>= r1` and
    /// CD45 overlap `> r2` confirm, and the confidence product includes
    /// `p(CD45|C)` as printed.
    PaperLiteral,
}

/// Decision thresholds on the two overlap fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionParams {
    /// CK-overlap threshold.
    #[serde(default = "default_r1")]
    pub r1: f64,
    /// CD45-overlap threshold.
    #[serde(default = "default_r2")]
    pub r2: f64,
    #[serde(default)]
    pub semantics: Semantics,
}

fn default_r1() -> f64 {
    0.17
}

fn default_r2() -> f64 {
    0.2
}

impl Default for DecisionParams {
    fn default() -> Self {
        Self {
            r1: default_r1(),
            r2: default_r2(),
            semantics: Semantics::default(),
        }
    }
}

impl DecisionParams {
    pub fn validate(&self) -> Result<(), DecisionError> {
        for (field, value) in [("r1", self.r1), ("r2", self.r2)] {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(DecisionError::ParamOutOfRange {
                    field,
                    lo: 0.0,
                    hi: 1.0,
                    value,
                });
            }
        }
        Ok(())
    }
}

/// Fraction of the candidate's pixels covered by `target`:
/// `A(target ∩ candidate) / A(candidate)`.
///
/// This is deliberately not IoU; the rule asks how much of the *cell* is
/// covered, not how similar the two regions are.
pub fn overlap_fraction(
    target: &BinaryMask,
    candidate: &BinaryMask,
) -> Result<f64, DecisionError> {
    let inter = target.intersection_area(candidate)?;
    let area = candidate.area();
    if area == 0 {
        return Err(DecisionError::ZeroAreaCandidate);
    }
    Ok(inter as f64 / area as f64)
}

/// The bare rule on precomputed overlap fractions.
pub fn decide(p_ck_given_c: f64, p_cd45_given_c: f64, params: &DecisionParams) -> bool {
    match params.semantics {
        Semantics::Exclusionary => p_ck_given_c > params.r1 && p_cd45_given_c <= params.r2,
        Semantics::PaperLiteral => p_ck_given_c >= params.r1 && p_cd45_given_c > params.r2,
    }
}

/// Detector scores feeding the confidence product: stage 1's box score
/// and stage 2's mask score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScores {
    pub p_ck: f64,
    pub p_c: f64,
}

impl Default for CandidateScores {
    fn default() -> Self {
        Self { p_ck: 1.0, p_c: 1.0 }
    }
}

/// All factors of the confidence product, plus the product itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBreakdown {
    /// Stage-1 detection score.
    pub p_ck: f64,
    /// Stage-2 detection score for the candidate mask.
    pub p_c: f64,
    pub p_ck_given_c: f64,
    pub p_cd45_given_c: f64,
    /// Fixed at 1 when CD45 is identified by thresholding; an empty CD45
    /// mask contributes no counter-evidence, so it also stays 1 instead
    /// of absorbing the whole product to zero.
    pub p_cd45: f64,
    pub confidence: f64,
}

impl ConfidenceBreakdown {
    /// Multiply the factors under the given semantics. `Exclusionary`
    /// swaps the CD45-coverage factor for `1 - p(CD45|C)`: a candidate
    /// free of CD45 should gain confidence, not lose all of it.
    pub fn compute(
        p_ck: f64,
        p_c: f64,
        p_ck_given_c: f64,
        p_cd45_given_c: f64,
        p_cd45: f64,
        semantics: Semantics,
    ) -> Self {
        let cd45_factor = match semantics {
            Semantics::Exclusionary => 1.0 - p_cd45_given_c,
            Semantics::PaperLiteral => p_cd45_given_c,
        };
        let confidence = cd45_factor * p_ck_given_c * p_c * p_ck * p_cd45;
        Self {
            p_ck,
            p_c,
            p_ck_given_c,
            p_cd45_given_c,
            p_cd45,
            confidence,
        }
    }
}

/// Per-candidate decision with its full evidence trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub candidate_id: String,
    pub is_ctc: bool,
    pub breakdown: ConfidenceBreakdown,
    pub params_used: DecisionParams,
}

impl Verdict {
    pub fn overlaps(&self) -> (f64, f64) {
        (self.breakdown.p_ck_given_c, self.breakdown.p_cd45_given_c)
    }

    /// Re-derive `is_ctc` from the stored overlaps and parameters; always
    /// true for verdicts produced by [`classify_candidate`].
    pub fn is_self_consistent(&self) -> bool {
        decide(
            self.breakdown.p_ck_given_c,
            self.breakdown.p_cd45_given_c,
            &self.params_used,
        ) == self.is_ctc
    }
}

/// Classify one candidate mask against the CK and CD45 masks of the same
/// region. All three masks must share dimensions and the candidate must
/// be non-empty.
pub fn classify_candidate(
    candidate_id: impl Into<String>,
    candidate: &BinaryMask,
    ck: &BinaryMask,
    cd45: &BinaryMask,
    scores: CandidateScores,
    params: &DecisionParams,
) -> Result<Verdict, DecisionError> {
    let p_ck_given_c = overlap_fraction(ck, candidate)?;
    let p_cd45_given_c = overlap_fraction(cd45, candidate)?;
    let is_ctc = decide(p_ck_given_c, p_cd45_given_c, params);
    let breakdown = ConfidenceBreakdown::compute(
        scores.p_ck,
        scores.p_c,
        p_ck_given_c,
        p_cd45_given_c,
        1.0,
        params.semantics,
    );
    Ok(Verdict {
        candidate_id: candidate_id.into(),
        is_ctc,
        breakdown,
        params_used: *params,
    })
}

/// One labeled observation for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub p_ck_given_c: f64,
    pub p_cd45_given_c: f64,
    pub label: bool,
}

/// Calibration result: the chosen params and the F1 they achieve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub params: DecisionParams,
    pub f1: f64,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
}

/// F1 as an exact integer ratio `(2tp, 2tp + fp + fn)`; comparing these
/// by cross multiplication avoids float ties during the grid scan.
fn f1_counts(
    records: &[CalibrationRecord],
    params: &DecisionParams,
) -> (u64, u64, u64) {
    let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
    for r in records {
        let predicted = decide(r.p_ck_given_c, r.p_cd45_given_c, params);
        match (predicted, r.label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    (tp, fp, fneg)
}

/// The closed threshold grid `{0, step, 2*step, ..., 1}`.
pub fn threshold_grid(step: f64) -> Vec<f64> {
    let mut grid = Vec::new();
    let mut k = 0u32;
    loop {
        let v = k as f64 * step;
        if v >= 1.0 {
            grid.push(1.0);
            return grid;
        }
        grid.push(v);
        k += 1;
    }
}

/// Exhaustive grid search for the (r1, r2) maximizing F1 of the rule
/// against the labels, under the given semantics. Ties break toward the
/// smallest r1, then the smallest r2, independent of evaluation order.
pub fn calibrate_thresholds(
    records: &[CalibrationRecord],
    grid_step: f64,
    semantics: Semantics,
) -> Result<Calibration, DecisionError> {
    if records.is_empty() {
        return Err(DecisionError::EmptyCalibrationSet);
    }
    if !(grid_step > 0.0 && grid_step <= 0.5) || grid_step.is_nan() {
        return Err(DecisionError::ParamOutOfRange {
            field: "grid_step",
            lo: f64::MIN_POSITIVE,
            hi: 0.5,
            value: grid_step,
        });
    }
    for (index, r) in records.iter().enumerate() {
        for value in [r.p_ck_given_c, r.p_cd45_given_c] {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(DecisionError::BadCalibrationRecord { index, value });
            }
        }
    }
    let positives = records.iter().filter(|r| r.label).count();
    if positives == 0 || positives == records.len() {
        return Err(DecisionError::Uncalibratable);
    }

    let grid = threshold_grid(grid_step);
    let mut best: Option<(DecisionParams, (u64, u64, u64))> = None;
    for &r1 in &grid {
        for &r2 in &grid {
            let params = DecisionParams { r1, r2, semantics };
            let (tp, fp, fneg) = f1_counts(records, &params);
            // F1 = 2tp / (2tp + fp + fn); with >=1 positive label the
            // denominator is always positive.
            let better = match &best {
                None => true,
                Some((_, (btp, bfp, bfneg))) => {
                    let num = 2 * tp;
                    let den = 2 * tp + fp + fneg;
                    let bnum = 2 * btp;
                    let bden = 2 * btp + bfp + bfneg;
                    (num as u128 * bden as u128) > (bnum as u128 * den as u128)
                }
            };
            if better {
                best = Some((params, (tp, fp, fneg)));
            }
        }
    }
    let (params, (tp, fp, fneg)) = best.expect("grid is never empty");
    Ok(Calibration {
        params,
        f1: 2.0 * tp as f64 / (2 * tp + fp + fneg) as f64,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fneg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::BinaryMask;
    use proptest::prelude::*;

    fn random_mask(width: u32, height: u32, seed: u64) -> BinaryMask {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(17);
        BinaryMask::from_fn(width, height, |_, _| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state & 1 == 1
        })
    }

    /// Mask pair on a 20x20 grid: candidate is a fixed 100-pixel square,
    /// target covers exactly `covered` of its pixels.
    fn candidate_and_cover(covered: usize) -> (BinaryMask, BinaryMask) {
        assert!(covered <= 100);
        let candidate = BinaryMask::from_fn(20, 20, |x, y| x < 10 && y < 10);
        let target = BinaryMask::from_fn(20, 20, |x, y| {
            x < 10 && y < 10 && (y * 10 + x) < covered as u32
        });
        (candidate, target)
    }

    #[test]
    fn overlap_fraction_full_containment_and_disjoint() {
        let (candidate, _) = candidate_and_cover(0);
        let superset = BinaryMask::from_fn(20, 20, |x, y| x < 12 && y < 12);
        assert_eq!(overlap_fraction(&superset, &candidate).unwrap(), 1.0);

        let far = BinaryMask::from_fn(20, 20, |x, y| x > 14 && y > 14);
        assert_eq!(overlap_fraction(&far, &candidate).unwrap(), 0.0);
    }

    #[test]
    fn overlap_fraction_counts_pixels_exactly() {
        // 10-pixel candidate with 3 pixels under the target.
        let candidate = BinaryMask::from_fn(10, 10, |x, y| y == 0 && x < 10);
        let target = BinaryMask::from_fn(10, 10, |x, y| y == 0 && x < 3);
        assert_eq!(overlap_fraction(&target, &candidate).unwrap(), 0.3);
    }

    #[test]
    fn overlap_fraction_rejects_degenerate_candidates() {
        let empty = BinaryMask::empty(8, 8).unwrap();
        let full = BinaryMask::from_fn(8, 8, |_, _| true);
        assert_eq!(
            overlap_fraction(&full, &empty),
            Err(DecisionError::ZeroAreaCandidate)
        );
        let small = BinaryMask::empty(4, 4).unwrap();
        assert!(matches!(
            overlap_fraction(&small, &full),
            Err(DecisionError::Raster(_))
        ));
    }

    #[test]
    fn overlap_fraction_matches_bruteforce_ratio() {
        for seed in 0..50 {
            let target = random_mask(32, 32, seed);
            let candidate = random_mask(32, 32, seed + 1000);
            if candidate.area() == 0 {
                continue;
            }
            let mut inter = 0usize;
            for y in 0..32 {
                for x in 0..32 {
                    if target.get(x, y) && candidate.get(x, y) {
                        inter += 1;
                    }
                }
            }
            let expected = inter as f64 / candidate.area() as f64;
            assert_eq!(overlap_fraction(&target, &candidate).unwrap(), expected);
        }
    }

    /// The full branch table at defaults r1=0.17, r2=0.2. Overlaps are
    /// exact pixel ratios over a 100-pixel candidate, so boundary rows
    /// compare equal to the thresholds in f64.
    #[test]
    fn branch_table_under_both_semantics() {
        let rows: &[(usize, usize, bool, bool)] = &[
            // (ck px, cd45 px, exclusionary, paper-literal)
            (10, 10, false, false),
            (10, 20, false, false),
            (10, 30, false, false),
            (17, 10, false, false),
            (17, 20, false, false),
            (17, 30, false, true),
            (30, 10, true, false),
            (30, 20, true, false),
            (30, 30, false, true),
        ];
        for &(ck_px, cd45_px, expect_excl, expect_lit) in rows {
            let (candidate, ck) = candidate_and_cover(ck_px);
            let (_, cd45) = candidate_and_cover(cd45_px);
            for (semantics, expected) in [
                (Semantics::Exclusionary, expect_excl),
                (Semantics::PaperLiteral, expect_lit),
            ] {
                let params = DecisionParams {
                    semantics,
                    ..DecisionParams::default()
                };
                let verdict = classify_candidate(
                    "c",
                    &candidate,
                    &ck,
                    &cd45,
                    CandidateScores::default(),
                    &params,
                )
                .unwrap();
                assert_eq!(
                    verdict.is_ctc, expected,
                    "ck={ck_px} cd45={cd45_px} {semantics:?}"
                );
                assert!(verdict.is_self_consistent());
                assert_eq!(
                    verdict.overlaps(),
                    (ck_px as f64 / 100.0, cd45_px as f64 / 100.0)
                );
            }
        }
    }

    #[test]
    fn boundary_fractions_compare_equal_to_threshold_literals() {
        // 17/100 and 20/100 must be the same f64 as the default r1/r2;
        // both are the correctly rounded nearest double of the decimal.
        assert_eq!(17.0 / 100.0, 0.17);
        assert_eq!(20.0 / 100.0, 0.2);
    }

    #[test]
    fn confidence_product_matches_spec_examples() {
        let excl = ConfidenceBreakdown::compute(0.8, 0.9, 0.5, 0.0, 1.0, Semantics::Exclusionary);
        assert!((excl.confidence - 0.36).abs() < 1e-12);

        let lit = ConfidenceBreakdown::compute(0.8, 0.9, 0.5, 0.0, 1.0, Semantics::PaperLiteral);
        assert_eq!(lit.confidence, 0.0);

        // Absorbing zero in the active product.
        let zeroed = ConfidenceBreakdown::compute(0.0, 0.9, 0.5, 0.1, 1.0, Semantics::Exclusionary);
        assert_eq!(zeroed.confidence, 0.0);
    }

    #[test]
    fn calibration_recovers_hand_enumerated_grid() {
        // Single positive at (0.5, 0.0), single negative at (0.1, 0.0):
        // F1=1 for any grid r1 in [0.10, 0.50); smallest wins.
        let records = [
            CalibrationRecord {
                p_ck_given_c: 0.5,
                p_cd45_given_c: 0.0,
                label: true,
            },
            CalibrationRecord {
                p_ck_given_c: 0.1,
                p_cd45_given_c: 0.0,
                label: false,
            },
        ];
        let cal = calibrate_thresholds(&records, 0.01, Semantics::Exclusionary).unwrap();
        assert_eq!(cal.params.r1, 0.10);
        assert_eq!(cal.params.r2, 0.0);
        assert_eq!(cal.f1, 1.0);
    }

    #[test]
    fn calibration_rejects_one_class_sets() {
        let all_negative: Vec<CalibrationRecord> = (0..5)
            .map(|i| CalibrationRecord {
                p_ck_given_c: i as f64 / 10.0,
                p_cd45_given_c: 0.0,
                label: false,
            })
            .collect();
        assert_eq!(
            calibrate_thresholds(&all_negative, 0.01, Semantics::Exclusionary),
            Err(DecisionError::Uncalibratable)
        );
        assert_eq!(
            calibrate_thresholds(&[], 0.01, Semantics::Exclusionary),
            Err(DecisionError::EmptyCalibrationSet)
        );
    }

    #[test]
    fn calibration_validates_step_and_records() {
        let records = [
            CalibrationRecord {
                p_ck_given_c: 0.5,
                p_cd45_given_c: 0.0,
                label: true,
            },
            CalibrationRecord {
                p_ck_given_c: 1.5,
                p_cd45_given_c: 0.0,
                label: false,
            },
        ];
        assert!(matches!(
            calibrate_thresholds(&records, 0.0, Semantics::Exclusionary),
            Err(DecisionError::ParamOutOfRange { field: "grid_step", .. })
        ));
        assert!(matches!(
            calibrate_thresholds(&records, 0.01, Semantics::Exclusionary),
            Err(DecisionError::BadCalibrationRecord { index: 1, .. })
        ));
    }

    #[test]
    fn threshold_grid_is_closed_and_contains_defaults() {
        let grid = threshold_grid(0.01);
        assert_eq!(grid.len(), 101);
        assert_eq!(grid[0], 0.0);
        assert_eq!(*grid.last().unwrap(), 1.0);
        assert!(grid.contains(&0.17));
        assert!(grid.contains(&0.2));

        let coarse = threshold_grid(0.3);
        assert_eq!(coarse, vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
    }

    proptest! {
        #[test]
        fn rule_is_monotone_in_ck_overlap(
            k1 in 0usize..=100, k2 in 0usize..=100, cd45 in 0usize..=100
        ) {
            let (lo, hi) = (k1.min(k2), k1.max(k2));
            for semantics in [Semantics::Exclusionary, Semantics::PaperLiteral] {
                let params = DecisionParams { semantics, ..DecisionParams::default() };
                let a = decide(lo as f64 / 100.0, cd45 as f64 / 100.0, &params);
                let b = decide(hi as f64 / 100.0, cd45 as f64 / 100.0, &params);
                // Raising CK overlap never flips true -> false.
                prop_assert!(!(a && !b));
            }
        }

        #[test]
        fn cd45_monotonicity_depends_on_semantics(
            ck in 0usize..=100, k1 in 0usize..=100, k2 in 0usize..=100
        ) {
            let (lo, hi) = (k1.min(k2), k1.max(k2));
            let excl = DecisionParams::default();
            let a = decide(ck as f64 / 100.0, lo as f64 / 100.0, &excl);
            let b = decide(ck as f64 / 100.0, hi as f64 / 100.0, &excl);
            // Exclusionary: raising CD45 overlap never flips false -> true.
            prop_assert!(!(!a && b));

            let lit = DecisionParams { semantics: Semantics::PaperLiteral, ..excl };
            let a = decide(ck as f64 / 100.0, lo as f64 / 100.0, &lit);
            let b = decide(ck as f64 / 100.0, hi as f64 / 100.0, &lit);
            prop_assert!(!(a && !b));
        }

        #[test]
        fn confidence_stays_in_unit_interval(
            p_ck in 0.0f64..=1.0, p_c in 0.0f64..=1.0,
            ov1 in 0.0f64..=1.0, ov2 in 0.0f64..=1.0
        ) {
            for semantics in [Semantics::Exclusionary, Semantics::PaperLiteral] {
                let b = ConfidenceBreakdown::compute(p_ck, p_c, ov1, ov2, 1.0, semantics);
                prop_assert!((0.0..=1.0).contains(&b.confidence));
            }
        }
    }
}
