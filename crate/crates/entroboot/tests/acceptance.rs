//! Acceptance suite: every release-gating check in one target, one
//! test per criterion, each printing a PASS line with the measured
//! numbers. Run with `cargo test --test acceptance -- --nocapture` to
//! see them all.

use std::sync::OnceLock;
use std::time::Instant;

use entroboot::bootstrap::theory::{dominance_report, monte_carlo_label_sim, theory_approx, theory_exact};
use entroboot::instancer::run_instancing;
use entroboot::metrics::{
    average_precision, dice, gt_instances, iou_mask, roc_auroc, MatchMode, ScoredPrediction,
};
use entroboot::pipeline::{
    run_ablation, run_pipeline, run_suite, AblationAxis, AblationSpec, RunConfig, SuiteResult,
};
use entroboot::raster::{BBox, BinaryMask, ImageGrid};
use entroboot::sparsify::{sample_points, SparsifyConfig};
use entroboot::synth::{generate_scene, SceneConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The fixed 20-scene suite under the default configuration.
fn default_suite() -> &'static SuiteResult {
    static SUITE: OnceLock<SuiteResult> = OnceLock::new();
    SUITE.get_or_init(|| run_suite(&RunConfig::default(), None).expect("default suite runs"))
}

#[test]
fn criterion_1_closed_form_entropy_values() {
    let start = Instant::now();
    let exact = theory_exact(0.05, 1.0).unwrap();
    let approx = theory_approx(0.05, 1.0);
    let elapsed = start.elapsed();

    assert!(
        (exact - 0.198515).abs() < 1e-6,
        "exact entropy {exact} != 0.198515"
    );
    assert!(
        (approx - 0.149787).abs() < 1e-6,
        "dominant term {approx} != 0.149787"
    );
    assert!(elapsed.as_micros() < 1000, "took {elapsed:?}, budget 1 ms");
    println!(
        "criterion 1: PASS — exact {exact:.6}, approx {approx:.6}, {elapsed:?}"
    );
}

#[test]
fn criterion_2_dominance_limit_behavior() {
    let start = Instant::now();
    for xi in 1..=10 {
        let x = xi as f64 / 10.0;
        let mut last = 0.0;
        for k in 2..=8 {
            let eps = 10f64.powi(-k);
            let frac = dominance_report(eps, x).unwrap().dominant_fraction;
            assert!(
                frac > last,
                "x={x}, eps={eps}: fraction {frac} not above {last}"
            );
            last = frac;
        }
        let at_1e6 = dominance_report(1e-6, x).unwrap().dominant_fraction;
        assert!(at_1e6 >= 0.75, "x={x}: fraction {at_1e6} below 0.75 at 1e-6");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1 s");
    println!("criterion 2: PASS — dominant fraction strictly increasing, >= 0.75 at eps=1e-6, {elapsed:?}");
}

#[test]
fn criterion_3_monte_carlo_label_rate() {
    let start = Instant::now();
    let (p_ct, eps, n) = (0.3, 0.05, 1_000_000u64);
    let expected = eps * p_ct;
    let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
    let mut within_3 = 0;
    for seed in 0..50u64 {
        let r = monte_carlo_label_sim(p_ct, eps, n, seed).unwrap();
        let dev = (r.empirical_label_rate - expected).abs();
        assert!(
            dev <= 4.0 * sigma,
            "seed {seed}: rate {} deviates {dev:.2e} > 4 sigma",
            r.empirical_label_rate
        );
        if dev <= 3.0 * sigma {
            within_3 += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(within_3 >= 48, "only {within_3}/50 within 3 sigma");
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, budget 10 s");
    println!(
        "criterion 3: PASS — 50/50 within 4 sigma, {within_3}/50 within 3 sigma, {elapsed:?}"
    );
}

#[test]
fn criterion_4_metric_oracles() {
    let start = Instant::now();

    // AUROC against the all-pairs Mann-Whitney statistic
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut max_err = 0.0f64;
    for _ in 0..200 {
        let w = rng.gen_range(3..=16);
        let h = rng.gen_range(3..=16);
        let levels = rng.gen_range(2..=10);
        let entropy = ImageGrid::from_fn(w, h, |_, _| {
            rng.gen_range(0..levels) as f64 / levels as f64
        })
        .unwrap();
        let mut gt = BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(0.35)).unwrap();
        if gt.is_empty() {
            gt.set(0, 0, true);
        }
        if gt.popcount() == w * h {
            gt.set(0, 0, false);
        }
        let (_, auroc) = roc_auroc(&entropy, &gt).unwrap();
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in entropy.data().iter().enumerate() {
            if !gt.bits()[i] {
                continue;
            }
            for (j, &sj) in entropy.data().iter().enumerate() {
                if gt.bits()[j] {
                    continue;
                }
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
        max_err = max_err.max((auroc - wins / pairs).abs());
    }
    assert!(max_err < 1e-9, "AUROC vs Mann-Whitney max error {max_err:.2e}");

    // AP hand case: 2 GT, predictions hit/miss/hit by descending score
    let mut gt_map = entroboot::raster::LabelMap::new(64, 64).unwrap();
    for (id, (x0, y0)) in [(1u32, (4usize, 4usize)), (2, (30, 30))] {
        for y in y0..y0 + 8 {
            for x in x0..x0 + 8 {
                gt_map.set(x, y, id);
            }
        }
    }
    let gts = gt_instances(&gt_map);
    let preds = vec![
        ScoredPrediction {
            bbox: BBox::new(4, 4, 12, 12).unwrap(),
            mask: None,
            score: 0.9,
        },
        ScoredPrediction {
            bbox: BBox::new(50, 50, 60, 60).unwrap(),
            mask: None,
            score: 0.8,
        },
        ScoredPrediction {
            bbox: BBox::new(30, 30, 38, 38).unwrap(),
            mask: None,
            score: 0.7,
        },
    ];
    let ap = average_precision(&preds, &gts, 0.5, MatchMode::Bbox).unwrap();
    assert!((ap - 0.8350).abs() < 1e-4, "hand-case AP {ap} != 0.8350");

    // Dice-IoU algebraic identity on 1000 random mask pairs
    for _ in 0..1000 {
        let a = BinaryMask::from_fn(12, 12, |_, _| rng.gen_bool(0.4)).unwrap();
        let b = BinaryMask::from_fn(12, 12, |_, _| rng.gen_bool(0.4)).unwrap();
        let d = dice(&a, &b).unwrap();
        match iou_mask(&a, &b) {
            Ok(i) => assert!(
                (d - 2.0 * i / (1.0 + i)).abs() < 1e-12,
                "identity broken: dice {d}, iou {i}"
            ),
            Err(_) => assert_eq!(d, 1.0),
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget 30 s");
    println!(
        "criterion 4: PASS — AUROC err {max_err:.1e}, AP {ap:.4}, identity on 1000 pairs, {elapsed:?}"
    );
}

#[test]
fn criterion_5_ideal_entropy_end_to_end() {
    let config = RunConfig::default();
    let mut worst_iou: f64 = 1.0;
    for i in 0..20usize {
        let seed = config.image_seed(i);
        let scene = SceneConfig {
            seed,
            ..config.scene.clone()
        };
        let (image, gt) = generate_scene(&scene).unwrap();
        let points = sample_points(
            &gt,
            &SparsifyConfig {
                seed: seed ^ 0x9e3779b97f4a7c15,
                ..config.sparsify.clone()
            },
        )
        .unwrap();
        let (w, h) = image.dims();
        let ideal =
            ImageGrid::from_fn(w, h, |x, y| if gt.get(x, y) > 0 { 1.0 } else { 0.0 }).unwrap();
        let set = run_instancing(&ideal, &points, &image, &config.instancer).unwrap();

        let report = entroboot::metrics::detection_rate(&set, &gt, 0.5).unwrap();
        assert_eq!(
            report.rate, 1.0,
            "scene {i}: detection rate {} ({}/{})",
            report.rate, report.tp, report.n_gt
        );

        for inst in &set.instances {
            let pi = inst.matched_point.expect("matched instances carry a point");
            let gt_id = gt.get(points[pi].x, points[pi].y);
            assert!(gt_id > 0, "scene {i}: instance matched a background point");
            let gt_mask = gt.mask_of(gt_id);
            let mut inter = 0usize;
            let mut pred_area = 0usize;
            for y in inst.bbox.y0..inst.bbox.y1 {
                for x in inst.bbox.x0..inst.bbox.x1 {
                    if inst.mask.get(x - inst.bbox.x0, y - inst.bbox.y0) {
                        pred_area += 1;
                        if gt_mask.get(x, y) {
                            inter += 1;
                        }
                    }
                }
            }
            let iou = inter as f64 / (pred_area + gt_mask.popcount() - inter) as f64;
            assert!(
                iou >= 0.5,
                "scene {i}: nucleus {gt_id} recovered with mask IoU {iou:.3}"
            );
            worst_iou = worst_iou.min(iou);
        }
    }
    println!(
        "criterion 5: PASS — D_0.5 = 1.0 on all 20 scenes, worst mask IoU {worst_iou:.3}"
    );
}

#[test]
fn criterion_6_learned_entropy_targets() {
    // runtime measured single-threaded as specified
    let start = Instant::now();
    let suite = run_suite(&RunConfig::default(), Some(1)).unwrap();
    let elapsed = start.elapsed();
    let per_image = elapsed.as_secs_f64() / 20.0;

    assert_eq!(suite.n_failed(), 0, "suite images failed");
    let auroc = suite.mean(|m| m.auroc);
    let dice = suite.mean(|m| m.peak_dice);
    let d50 = suite.mean(|m| m.d50());
    assert!(auroc >= 0.90, "mean AUROC {auroc:.4} below 0.90");
    assert!(dice >= 0.60, "mean peak Dice {dice:.4} below 0.60");
    assert!(d50 >= 0.80, "mean detection rate {d50:.4} below 0.80");
    assert!(
        per_image < 5.0,
        "single-threaded {per_image:.2} s per image, budget 5 s"
    );
    println!(
        "criterion 6: PASS — AUROC {auroc:.4}, peak Dice {dice:.4}, D_0.5 {d50:.4}, {per_image:.2} s/image"
    );
}

#[test]
fn criterion_7_weak_label_trends() {
    let base = RunConfig::default();
    let radius = run_ablation(
        &AblationSpec {
            axis: AblationAxis::Radius,
            values: vec![1.0, 3.0],
            base: base.clone(),
        },
        None,
    )
    .unwrap();
    let keep = run_ablation(
        &AblationSpec {
            axis: AblationAxis::KeepFraction,
            values: vec![1.0, 0.5],
            base: base.clone(),
        },
        None,
    )
    .unwrap();
    let jitter = run_ablation(
        &AblationSpec {
            axis: AblationAxis::Jitter,
            values: vec![0.0, 5.0],
            base,
        },
        None,
    )
    .unwrap();

    let dice_gap = radius[1].mean_peak_dice - radius[0].mean_peak_dice;
    let keep_gap = keep[0].mean_auroc - keep[1].mean_auroc;
    let jitter_gap = jitter[0].mean_auroc - jitter[1].mean_auroc;
    assert!(
        dice_gap > 0.01,
        "peak Dice gap r3 - r1 = {dice_gap:.4}, need > 0.01"
    );
    assert!(
        keep_gap > 0.01,
        "AUROC gap keep 1.0 - 0.5 = {keep_gap:.4}, need > 0.01"
    );
    assert!(
        jitter_gap > 0.01,
        "AUROC gap jitter 0 - 5 = {jitter_gap:.4}, need > 0.01"
    );
    println!(
        "criterion 7: PASS — Dice(r3-r1) +{dice_gap:.4}, AUROC(keep) +{keep_gap:.4}, AUROC(jitter) +{jitter_gap:.4}"
    );
}

#[test]
fn criterion_8_pipeline_determinism() {
    let tmp = std::env::temp_dir().join(format!("entroboot-acceptance-{}", std::process::id()));
    let mut runs = Vec::new();
    for (label, threads) in [("a1", 1usize), ("b1", 1), ("a8", 8), ("b8", 8)] {
        let config = RunConfig {
            n_images: 6,
            output_dir: tmp.join(label),
            ..RunConfig::default()
        };
        let agg = run_pipeline(&config, Some(threads)).unwrap();
        assert_eq!(agg.n_failed, 0);
        let csv = std::fs::read(config.output_dir.join("metrics.csv")).unwrap();
        let coco = std::fs::read(config.output_dir.join("instances_coco.json")).unwrap();
        runs.push((csv, coco));
    }
    for (csv, coco) in &runs[1..] {
        assert_eq!(csv, &runs[0].0, "metrics.csv differs between runs");
        assert_eq!(coco, &runs[0].1, "COCO JSON differs between runs");
    }
    std::fs::remove_dir_all(&tmp).ok();
    println!("criterion 8: PASS — byte-identical metrics.csv and COCO JSON at 1 and 8 threads");
}

#[test]
fn criterion_9_entropy_separates_classes_everywhere() {
    let suite = default_suite();
    let mut min_gap = f64::INFINITY;
    let mut count = 0;
    for o in suite.succeeded() {
        let gap = o.metrics.entropy_fg_mean - o.metrics.entropy_bg_mean;
        assert!(
            gap > 0.0,
            "image {}: nucleus entropy mean {} not above background {}",
            o.index,
            o.metrics.entropy_fg_mean,
            o.metrics.entropy_bg_mean
        );
        min_gap = min_gap.min(gap);
        count += 1;
    }
    assert_eq!(count, 20, "default suite must yield 20 images");
    println!(
        "criterion 9: PASS — nucleus entropy above background on all 20 images, min gap {min_gap:.3} nats"
    );
}
