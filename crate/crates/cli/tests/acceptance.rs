//! Acceptance suite: one test per criterion, each printing a PASS line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).
//! Every oracle here is implemented independently of the code path it
//! checks: exhaustive scans, brute-force pixel counting, and a standalone
//! grid evaluator.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use ctcpipe::decision::{
    calibrate_thresholds, classify_candidate, decide, overlap_fraction, CalibrationRecord,
    CandidateScores, DecisionParams, DecisionError, Semantics,
};
use ctcpipe::detector::{
    build_detector, decode_rle_mask, encode_rle_mask, DetectorBinding, DetectorKind, DetectorStage,
};
use ctcpipe::pipeline::{
    evaluate_batch, run_sample, BatchRunner, PipelineConfig, SampleOutcome, SampleRecord,
    SampleResult, StageTimings,
};
use ctcpipe::raster::{BinaryMask, BoundingBox, ChannelSet, GrayImage};
use ctcpipe::segment::{ClassicalDetectorConfig, SizeFilter};
use ctcpipe::synth::batch::{generate_sample, requested_labels, BatchSpec};
use ctcpipe::threshold::{otsu_threshold, ThresholdError};

/// Self-contained xorshift for test inputs; nothing shared with the
/// library's generators.
struct XorShift(u64);

impl XorShift {
    fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(0x9e3779b97f4a7c15) | 1)
    }

    fn next(&mut self) -> u64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        self.0
    }
}

fn pass(criterion: u32, name: &str, detail: &str) {
    println!("acceptance criterion {criterion} ({name}): PASS — {detail}");
}

// ---------------------------------------------------------------------------
// Criterion 1: Otsu equals an exhaustive between-class-variance scan on
// >= 1000 random 64x64 images, exactly, in under 10 seconds.
// ---------------------------------------------------------------------------

/// Oracle: per candidate threshold, class stats straight off a freshly
/// counted histogram; argmax by u128 cross multiplication, lowest t wins.
fn oracle_otsu(img: &GrayImage) -> Option<u8> {
    let mut hist = [0u64; 256];
    for &p in img.pixels() {
        hist[p as usize] += 1;
    }
    let mut best: Option<(u8, u128, u128)> = None;
    for t in 0..=255usize {
        let (mut w0, mut s0, mut w1, mut s1) = (0u64, 0u64, 0u64, 0u64);
        for (i, &count) in hist.iter().enumerate() {
            if i <= t {
                w0 += count;
                s0 += i as u64 * count;
            } else {
                w1 += count;
                s1 += i as u64 * count;
            }
        }
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let diff = (s0 as u128 * w1 as u128).abs_diff(s1 as u128 * w0 as u128);
        let (num, den) = (diff * diff, w0 as u128 * w1 as u128);
        let better = match best {
            None => true,
            Some((_, bn, bd)) => num * bd > bn * den,
        };
        if better {
            best = Some((t as u8, num, den));
        }
    }
    best.map(|(t, _, _)| t)
}

#[test]
fn criterion_1_otsu_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = XorShift::new(101);
    let n = 1000;
    for case in 0..n {
        // Mix of full-range noise and low-contrast two-level images so
        // near-tie thresholds get exercised too.
        let img = if case % 4 == 3 {
            let (a, b) = ((rng.next() % 256) as u8, (rng.next() % 256) as u8);
            GrayImage::from_fn(64, 64, |_, _| if rng.next() & 1 == 0 { a } else { b })
        } else {
            GrayImage::from_fn(64, 64, |_, _| (rng.next() >> 32) as u8)
        };
        match (otsu_threshold(&img), oracle_otsu(&img)) {
            (Ok(result), Some(expected)) => {
                assert_eq!(result.t, expected, "case {case}: threshold diverged");
            }
            (Err(ThresholdError::DegenerateHistogram { .. }), None) => {}
            (got, want) => panic!("case {case}: {:?} vs oracle {want:?}", got.map(|r| r.t)),
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    pass(1, "otsu-oracle", &format!("{n} images, exact match, {elapsed:?}"));
}

// ---------------------------------------------------------------------------
// Criterion 2: overlap_fraction equals the brute-force count ratio on
// >= 1000 random mask pairs up to 64x64, within 1 ulp, under 5 seconds.
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_overlap_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = XorShift::new(202);
    let mut checked = 0;
    while checked < 1000 {
        let w = 1 + (rng.next() % 64) as u32;
        let h = 1 + (rng.next() % 64) as u32;
        let density = 1 + rng.next() % 7;
        let target = BinaryMask::from_fn(w, h, |_, _| rng.next() % 8 < density);
        let candidate = BinaryMask::from_fn(w, h, |_, _| rng.next() % 8 < density);

        // Brute force: walk every pixel once, count both tallies.
        let (mut inter, mut area) = (0u64, 0u64);
        for y in 0..h {
            for x in 0..w {
                if candidate.get(x, y) {
                    area += 1;
                    if target.get(x, y) {
                        inter += 1;
                    }
                }
            }
        }
        match overlap_fraction(&target, &candidate) {
            Ok(frac) => {
                assert!(area > 0);
                let expected = inter as f64 / area as f64;
                let ulps = frac.to_bits().abs_diff(expected.to_bits());
                assert!(ulps <= 1, "fraction {frac} vs {expected} ({ulps} ulps)");
                checked += 1;
            }
            Err(DecisionError::ZeroAreaCandidate) => assert_eq!(area, 0),
            Err(e) => panic!("unexpected error {e}"),
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    pass(2, "overlap-oracle", &format!("{checked} pairs, <=1 ulp, {elapsed:?}"));
}

// ---------------------------------------------------------------------------
// Criterion 3: the full decision branch table at the default thresholds,
// under both semantics, with exact boundary fractions.
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_branch_table() {
    // Candidate is 100 pixels, so covered-pixel counts map to exact
    // fractions: 17/100 == 0.17 and 20/100 == 0.2 in f64.
    let candidate = BinaryMask::from_fn(20, 20, |x, y| x < 10 && y < 10);
    let cover = |pixels: usize| {
        BinaryMask::from_fn(20, 20, |x, y| x < 10 && y < 10 && (y * 10 + x) < pixels as u32)
    };

    // Rows: CK coverage below/at/above r1 x CD45 coverage below/at/above
    // r2. Expected columns per the rule definitions:
    //   exclusionary: ck > 0.17 && cd45 <= 0.2
    //   paper-literal: ck >= 0.17 && cd45 > 0.2
    let rows: &[(usize, usize, bool, bool)] = &[
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
    let mut assertions = 0;
    for &(ck_px, cd45_px, expect_excl, expect_literal) in rows {
        for (semantics, expected) in [
            (Semantics::Exclusionary, expect_excl),
            (Semantics::PaperLiteral, expect_literal),
        ] {
            let params = DecisionParams {
                semantics,
                ..DecisionParams::default()
            };
            let verdict = classify_candidate(
                "row",
                &candidate,
                &cover(ck_px),
                &cover(cd45_px),
                CandidateScores::default(),
                &params,
            )
            .unwrap();
            assert_eq!(
                verdict.is_ctc, expected,
                "ck={ck_px}px cd45={cd45_px}px under {semantics:?}"
            );
            assert_eq!(verdict.overlaps(), (ck_px as f64 / 100.0, cd45_px as f64 / 100.0));
            assertions += 1;
        }
    }
    assert!(assertions >= 16);
    pass(3, "branch-table", &format!("{assertions} exact assertions across both semantics"));
}

// ---------------------------------------------------------------------------
// Criterion 4: the reported accounting arithmetic.
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_results_arithmetic() {
    let mut results = Vec::new();
    let mut push = |prefix: &str, n: usize, outcome: SampleOutcome, positive: bool| {
        for i in 0..n {
            results.push(SampleResult {
                sample_id: format!("{prefix}{i}"),
                outcome,
                verdicts: Vec::new(),
                sample_positive: positive,
                timings: StageTimings::default(),
                stage_errors: Vec::new(),
            });
        }
    };
    push("nock", 130, SampleOutcome::NoCkDetected, false);
    push("nodapi", 170, SampleOutcome::NoDapiDetected, false);
    push("negeval", 115, SampleOutcome::Evaluated, false);
    push("poseval", 5, SampleOutcome::Evaluated, true);

    let labels: BTreeMap<String, bool> = results
        .iter()
        .map(|r| (r.sample_id.clone(), false))
        .collect();
    let report = evaluate_batch(&results, Some(&labels)).unwrap();

    assert_eq!(report.n_samples, 420);
    assert_eq!(report.n_no_ck, 130);
    assert_eq!(report.n_no_dapi, 170);
    assert_eq!(report.n_evaluated, 120);
    assert_eq!(report.n_no_ck + report.n_no_dapi + report.n_evaluated, report.n_samples);
    assert_eq!(report.n_predicted_positive, 5);
    assert_eq!(report.n_predicted_negative, 415);
    assert_eq!(
        report.n_predicted_positive + report.n_predicted_negative,
        report.n_samples
    );

    let accuracy = report.accuracy.unwrap();
    assert!((accuracy - 0.98810).abs() <= 0.00001, "accuracy {accuracy}");
    let stage3 = report.stage3_accuracy.unwrap();
    assert!((stage3 - 0.95833).abs() <= 0.00001, "stage3 {stage3}");
    pass(
        4,
        "results-arithmetic",
        &format!("accuracy {accuracy:.5}, stage-3 {stage3:.5}, partition holds"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: 200 synthetic samples (100/100), >= 99% agreement with the
// planted truth via the classical backend, bit-identical reports across
// two runs, under 60 seconds.
// ---------------------------------------------------------------------------

fn acceptance_pipeline_config(spec: &BatchSpec) -> PipelineConfig {
    PipelineConfig {
        classical: ClassicalDetectorConfig {
            size_filter: SizeFilter {
                min_diameter_um: 5.0,
                microns_per_pixel: Some(1.0),
            },
            dapi_score_threshold: 0.9,
        },
        crop_padding: spec.recommended_crop_padding(),
        min_class_separation: 32,
        ..PipelineConfig::default()
    }
}

fn run_classical_batch(
    spec: &BatchSpec,
    cfg: &PipelineConfig,
) -> (Vec<SampleRecord>, Vec<bool>) {
    let params = DecisionParams::default();
    let labels = requested_labels(spec);
    let sets: Vec<ChannelSet> = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| generate_sample(spec, &params, i, label).unwrap().0)
        .collect();
    let classical = cfg.classical.clone();
    let stage1 = build_detector(&DetectorBinding::classical(DetectorStage::Stage1Ck), &classical)
        .unwrap();
    let stage2 = build_detector(&DetectorBinding::classical(DetectorStage::Stage2Dapi), &classical)
        .unwrap();
    let runner = BatchRunner {
        stage1: stage1.as_ref(),
        stage2: stage2.as_ref(),
        cfg,
        workers: 0,
    };
    (runner.run_channel_sets(sets), labels)
}

#[test]
fn criterion_5_end_to_end_synthetic() {
    let start = Instant::now();
    let spec = BatchSpec::preset("acceptance-200").unwrap();
    assert_eq!((spec.n_samples, spec.n_positive), (200, 100));
    let cfg = acceptance_pipeline_config(&spec);

    let (records_a, labels) = run_classical_batch(&spec, &cfg);
    let (records_b, _) = run_classical_batch(&spec, &cfg);

    let unwrap_completed = |records: &[SampleRecord]| -> Vec<SampleResult> {
        records
            .iter()
            .map(|r| match r {
                SampleRecord::Completed(result) => result.clone(),
                SampleRecord::Failed(failure) => panic!("no sample may fail: {failure}"),
            })
            .collect()
    };
    let results_a = unwrap_completed(&records_a);
    let results_b = unwrap_completed(&records_b);

    let agreement = results_a
        .iter()
        .zip(&labels)
        .filter(|(r, &label)| r.sample_positive == label)
        .count();
    assert!(
        agreement as f64 >= 0.99 * labels.len() as f64,
        "only {agreement}/{} agree with the planted truth",
        labels.len()
    );

    let label_map: BTreeMap<String, bool> = results_a
        .iter()
        .zip(&labels)
        .map(|(r, &l)| (r.sample_id.clone(), l))
        .collect();
    let report_a = evaluate_batch(&results_a, Some(&label_map)).unwrap();
    let report_b = evaluate_batch(&results_b, Some(&label_map)).unwrap();
    let json_a = serde_json::to_string(&report_a).unwrap();
    let json_b = serde_json::to_string(&report_b).unwrap();
    assert_eq!(json_a, json_b, "reports must be bit-identical across runs");

    // Verdict-level determinism too (timings excluded by design).
    for (a, b) in results_a.iter().zip(&results_b) {
        assert_eq!(a.sample_id, b.sample_id);
        assert_eq!(a.outcome, b.outcome);
        assert_eq!(a.verdicts, b.verdicts);
    }

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    pass(
        5,
        "end-to-end-synthetic",
        &format!(
            "{agreement}/200 agree, accuracy {:.4}, deterministic, {elapsed:?}",
            report_a.accuracy.unwrap()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: calibration recovers (0.17, 0.20) on a separable set and
// matches an independent brute-force grid evaluation exactly.
// ---------------------------------------------------------------------------

/// Standalone grid evaluator: recomputes predictions and F1 per grid
/// point from scratch, compares by u128 cross multiplication.
fn oracle_grid_search(
    records: &[CalibrationRecord],
    step: f64,
    semantics: Semantics,
) -> (f64, f64, f64) {
    let mut grid = Vec::new();
    let mut k = 0u32;
    loop {
        let v = f64::from(k) * step;
        if v >= 1.0 {
            grid.push(1.0);
            break;
        }
        grid.push(v);
        k += 1;
    }
    let mut best: Option<(f64, f64, u64, u64)> = None; // r1, r2, num, den
    for &r1 in &grid {
        for &r2 in &grid {
            let params = DecisionParams { r1, r2, semantics };
            let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
            for r in records {
                let predicted = decide(r.p_ck_given_c, r.p_cd45_given_c, &params);
                match (predicted, r.label) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fneg += 1,
                    (false, false) => {}
                }
            }
            let (num, den) = (2 * tp, 2 * tp + fp + fneg);
            let better = match best {
                None => true,
                Some((_, _, bn, bd)) => (num as u128) * (bd as u128) > (bn as u128) * (den as u128),
            };
            if better {
                best = Some((r1, r2, num, den));
            }
        }
    }
    let (r1, r2, num, den) = best.unwrap();
    (r1, r2, num as f64 / den as f64)
}

#[test]
fn criterion_6_calibration_recovery() {
    // Separable set planted around (0.17, 0.20). The F1=1 region is
    // exactly r1 in [0.17, 0.20) x r2 in [0.20, 0.23): margins 0.03.
    let mut records = vec![
        // Pins: negative at r1 boundary, positive forcing r1 < 0.20 and
        // r2 >= 0.20, negative forcing r2 < 0.23.
        CalibrationRecord { p_ck_given_c: 0.17, p_cd45_given_c: 0.00, label: false },
        CalibrationRecord { p_ck_given_c: 0.20, p_cd45_given_c: 0.20, label: true },
        CalibrationRecord { p_ck_given_c: 0.50, p_cd45_given_c: 0.23, label: false },
    ];
    let mut rng = XorShift::new(606);
    let unit = |rng: &mut XorShift| (rng.next() >> 11) as f64 / (1u64 << 53) as f64;
    for _ in 0..40 {
        // Positives comfortably inside the acceptance region.
        records.push(CalibrationRecord {
            p_ck_given_c: 0.25 + 0.65 * unit(&mut rng),
            p_cd45_given_c: 0.15 * unit(&mut rng),
            label: true,
        });
        // Negatives: either low CK coverage or heavy CD45 coverage.
        records.push(if rng.next() & 1 == 0 {
            CalibrationRecord {
                p_ck_given_c: 0.14 * unit(&mut rng),
                p_cd45_given_c: unit(&mut rng),
                label: false,
            }
        } else {
            CalibrationRecord {
                p_ck_given_c: 0.25 + 0.65 * unit(&mut rng),
                p_cd45_given_c: 0.26 + 0.6 * unit(&mut rng),
                label: false,
            }
        });
    }

    let calibration = calibrate_thresholds(&records, 0.01, Semantics::Exclusionary).unwrap();
    assert_eq!(calibration.params.r1, 0.17);
    assert_eq!(calibration.params.r2, 0.20);
    assert_eq!(calibration.f1, 1.0);

    let (oracle_r1, oracle_r2, oracle_f1) =
        oracle_grid_search(&records, 0.01, Semantics::Exclusionary);
    assert_eq!(calibration.params.r1, oracle_r1);
    assert_eq!(calibration.params.r2, oracle_r2);
    assert_eq!(calibration.f1, oracle_f1);
    pass(
        6,
        "calibration-recovery",
        &format!(
            "recovered (r1={}, r2={}) with F1=1 on {} records; oracle agrees",
            calibration.params.r1,
            calibration.params.r2,
            records.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: the wire protocol — stub external detector reproduces the
// in-process classical verdicts; RLE round-trips 1000 random masks.
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_wire_protocol_round_trip() {
    let spec = BatchSpec {
        n_samples: 16,
        n_positive: 8,
        seed: 77,
        ..BatchSpec::default()
    };
    let cfg = acceptance_pipeline_config(&spec);
    let params = DecisionParams::default();

    let stub = env!("CARGO_BIN_EXE_detector-stub");
    let endpoint = vec![
        stub.to_string(),
        "--microns-per-pixel".to_string(),
        "1".to_string(),
        "--min-diameter-um".to_string(),
        "5".to_string(),
    ];
    let external_binding = |stage| DetectorBinding {
        kind: DetectorKind::External,
        stage,
        endpoint: Some(endpoint.clone()),
        concurrency_safe: true,
    };
    let ext1 = build_detector(&external_binding(DetectorStage::Stage1Ck), &cfg.classical).unwrap();
    let ext2 = build_detector(&external_binding(DetectorStage::Stage2Dapi), &cfg.classical).unwrap();
    let cls1 = build_detector(&DetectorBinding::classical(DetectorStage::Stage1Ck), &cfg.classical)
        .unwrap();
    let cls2 = build_detector(&DetectorBinding::classical(DetectorStage::Stage2Dapi), &cfg.classical)
        .unwrap();

    let mut compared = 0;
    for (i, requested) in requested_labels(&spec).into_iter().enumerate() {
        let (set, truth) = generate_sample(&spec, &params, i, requested).unwrap();
        let classical = run_sample(&set, cls1.as_ref(), cls2.as_ref(), &cfg).unwrap();
        let external = run_sample(&set, ext1.as_ref(), ext2.as_ref(), &cfg).unwrap();
        assert_eq!(classical.outcome, external.outcome, "sample {i}");
        assert_eq!(classical.sample_positive, external.sample_positive, "sample {i}");
        assert_eq!(classical.verdicts, external.verdicts, "sample {i}");
        assert_eq!(classical.sample_positive, truth.positive, "sample {i}");
        compared += 1;
    }

    let mut rng = XorShift::new(707);
    let mut round_trips = 0;
    for _ in 0..1000 {
        let w = 1 + (rng.next() % 48) as u32;
        let h = 1 + (rng.next() % 48) as u32;
        let mask = BinaryMask::from_fn(w, h, |_, _| rng.next().is_multiple_of(3));
        let runs = encode_rle_mask(&mask);
        let back = decode_rle_mask(&runs, w, h).unwrap();
        assert_eq!(back, mask);
        round_trips += 1;
    }
    pass(
        7,
        "wire-protocol",
        &format!("{compared} samples identical via the stub; {round_trips} RLE round trips"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: degenerate inputs produce the specified errors, never
// crashes or silent wrong answers.
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_degenerate_inputs() {
    let mut checks = 0;

    // Constant images: degenerate histogram.
    let flat = GrayImage::filled(16, 16, 37).unwrap();
    assert!(matches!(
        otsu_threshold(&flat),
        Err(ThresholdError::DegenerateHistogram { value: 37 })
    ));
    checks += 1;
    assert!(ctcpipe::threshold::binarize_otsu(&flat).is_err());
    checks += 1;

    // Empty masks / zero-area candidates.
    let empty = BinaryMask::empty(16, 16).unwrap();
    let full = BinaryMask::from_fn(16, 16, |_, _| true);
    assert_eq!(
        overlap_fraction(&full, &empty),
        Err(DecisionError::ZeroAreaCandidate)
    );
    checks += 1;
    assert_eq!(
        classify_candidate(
            "degenerate",
            &empty,
            &full,
            &full,
            CandidateScores::default(),
            &DecisionParams::default()
        )
        .unwrap_err(),
        DecisionError::ZeroAreaCandidate
    );
    checks += 1;

    // Out-of-bounds boxes.
    let img = GrayImage::filled(16, 16, 10).unwrap();
    assert!(img.crop(&BoundingBox::new(100, 100, 4, 4), 0).is_err());
    checks += 1;

    // A detector reporting a box fully outside the image quarantines the
    // sample instead of crashing the batch.
    let bad_box = DetectorBinding {
        kind: DetectorKind::External,
        stage: DetectorStage::Stage1Ck,
        endpoint: Some(vec![
            "sh".to_string(),
            "-c".to_string(),
            r#"cat >/dev/null; echo '{"detections":[{"bbox":[500,500,10,10],"score":0.5,"mask_rle":null}]}'"#
                .to_string(),
        ]),
        concurrency_safe: true,
    };
    let classical_cfg = ClassicalDetectorConfig::default();
    let stage1 = build_detector(&bad_box, &classical_cfg).unwrap();
    let stage2 = build_detector(
        &DetectorBinding::classical(DetectorStage::Stage2Dapi),
        &classical_cfg,
    )
    .unwrap();
    let set = ChannelSet::new("oob", img.clone(), img.clone(), img.clone()).unwrap();
    let failure = run_sample(&set, stage1.as_ref(), stage2.as_ref(), &PipelineConfig::default())
        .expect_err("an unusable detection set must quarantine the sample");
    assert!(failure.message.contains("outside"), "{}", failure.message);
    checks += 1;

    // One-class calibration sets.
    let one_class: Vec<CalibrationRecord> = (0..4)
        .map(|i| CalibrationRecord {
            p_ck_given_c: i as f64 / 4.0,
            p_cd45_given_c: 0.0,
            label: true,
        })
        .collect();
    assert_eq!(
        calibrate_thresholds(&one_class, 0.01, Semantics::Exclusionary),
        Err(DecisionError::Uncalibratable)
    );
    checks += 1;

    // Wire-format violations surface as typed errors.
    assert!(decode_rle_mask(&[5, 3], 4, 4).is_err());
    checks += 1;
    let overscore = ctcpipe::detector::decode_reply(
        r#"{"detections":[{"bbox":[0,0,2,2],"score":1.2,"mask_rle":null}]}"#,
        DetectorStage::Stage1Ck,
        (4, 4),
    );
    assert!(matches!(
        overscore,
        Err(ctcpipe::detector::DetectorError::ScoreOutOfRange(_))
    ));
    checks += 1;

    // A fully blank sample classifies as no-CK rather than erroring.
    let cls1 = build_detector(
        &DetectorBinding::classical(DetectorStage::Stage1Ck),
        &classical_cfg,
    )
    .unwrap();
    let result = run_sample(&set, cls1.as_ref(), stage2.as_ref(), &PipelineConfig::default())
        .unwrap();
    assert_eq!(result.outcome, SampleOutcome::NoCkDetected);
    checks += 1;

    pass(8, "degenerate-inputs", &format!("{checks} specified error paths verified"));
}
