//! End-to-end orchestration: per-image pipeline, dataset runs, the
//! ablation sweep and all file emission.
//!
//! Every image is fully determined by `master_seed ^ index` (a stable
//! contract: golden outputs survive refactors as long as this holds).
//! Images run on a bounded worker pool and results merge in index
//! order, so thread count never changes any output byte.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{
    entropy_map, extract_features, fit_pixel_bayes, predict_prob_map, theory, EntropyMap, ProbMap,
};
use crate::coco;
use crate::error::{Error, Result};
use crate::instancer::{run_instancing, InstanceSet, InstancerConfig};
use crate::io;
use crate::metrics::{
    default_detection_alphas, detection_curve, dice_curve, roc_auroc, MetricCurve,
};
use crate::raster::{ImageGrid, LabelMap};
use crate::sparsify::{
    estimate_epsilon, rasterize_points, sample_points, PointAnnotationSet, SparsifyConfig,
};
use crate::synth::{generate_scene, SceneConfig};

/// Everything a full run needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub sparsify: SparsifyConfig,
    pub instancer: InstancerConfig,
    /// Histogram bins of the pixel Bayes model.
    pub bins: usize,
    pub laplace_alpha: f64,
    /// Threshold count of the Dice sweep.
    pub n_thresholds: usize,
    pub n_images: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene: SceneConfig::default(),
            sparsify: SparsifyConfig::default(),
            instancer: InstancerConfig::default(),
            // finer histograms and lighter smoothing than the bare
            // estimator defaults: suite-level sensitivity to label
            // coverage needs bins sparse enough that starved bins matter
            bins: 768,
            laplace_alpha: 0.05,
            n_thresholds: 101,
            n_images: 20,
            master_seed: 7,
            output_dir: PathBuf::from("run"),
        }
    }
}

/// Distinct RNG stream for point sampling so it never aliases the scene
/// stream seeded from the same image seed.
const SPARSIFY_STREAM: u64 = 0x9e3779b97f4a7c15;

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.sparsify.validate()?;
        self.instancer.validate()?;
        if self.n_images < 1 {
            return Err(Error::InvalidParameter("n_images must be >= 1".into()));
        }
        if self.bins == 0 {
            return Err(Error::InvalidParameter("bins must be >= 1".into()));
        }
        if self.n_thresholds < 2 {
            return Err(Error::InvalidParameter("n_thresholds must be >= 2".into()));
        }
        Ok(())
    }

    /// Seed of image `index` under this config.
    pub fn image_seed(&self, index: usize) -> u64 {
        self.master_seed ^ index as u64
    }

    /// Parses a flat dotted-key config file (`key = value` lines, `#`
    /// comments) over the defaults.
    pub fn from_file(path: impl AsRef<Path>) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        let text = std::fs::read_to_string(path.as_ref())?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            config.apply_kv(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    /// Applies one `key = value` override.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value for {key}: {value:?}")))
        }
        match key {
            "scene.width" => self.scene.width = parse(key, value)?,
            "scene.height" => self.scene.height = parse(key, value)?,
            "scene.nucleus_count" => self.scene.nucleus_count = parse(key, value)?,
            "scene.radius_min" => self.scene.radius_range.0 = parse(key, value)?,
            "scene.radius_max" => self.scene.radius_range.1 = parse(key, value)?,
            "scene.eccentricity_max" => self.scene.eccentricity_max = parse(key, value)?,
            "scene.overlap_allowed" => self.scene.overlap_allowed = parse(key, value)?,
            "scene.nucleus_mean" => self.scene.nucleus_mean = parse(key, value)?,
            "scene.nucleus_intensity_spread" => {
                self.scene.nucleus_intensity_spread = parse(key, value)?
            }
            "scene.background_mean" => self.scene.background_mean = parse(key, value)?,
            "scene.noise_sigma" => self.scene.noise_sigma = parse(key, value)?,
            "scene.blur_sigma" => self.scene.blur_sigma = parse(key, value)?,
            "sparsify.radius" => self.sparsify.radius = parse(key, value)?,
            "sparsify.keep_fraction" => self.sparsify.keep_fraction = parse(key, value)?,
            "sparsify.jitter_max" => self.sparsify.jitter_max = parse(key, value)?,
            "instancer.blur_sigma" => self.instancer.blur_sigma = parse(key, value)?,
            "instancer.threshold_window" => self.instancer.threshold_window = parse(key, value)?,
            "instancer.threshold_offset" => self.instancer.threshold_offset = parse(key, value)?,
            "instancer.min_area" => self.instancer.min_area = parse(key, value)?,
            "instancer.open_radius" => self.instancer.open_radius = parse(key, value)?,
            "instancer.marker_dt_fraction" => {
                self.instancer.marker_dt_fraction = parse(key, value)?
            }
            "instancer.match_max_dist" => self.instancer.match_max_dist = parse(key, value)?,
            "bootstrap.bins" => self.bins = parse(key, value)?,
            "bootstrap.laplace_alpha" => self.laplace_alpha = parse(key, value)?,
            "eval.n_thresholds" => self.n_thresholds = parse(key, value)?,
            "n_images" => self.n_images = parse(key, value)?,
            "master_seed" => self.master_seed = parse(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }
}

/// Scalar metrics of one processed image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub n_gt: usize,
    pub n_instances: usize,
    pub epsilon: f64,
    pub peak_dice_threshold: f64,
    pub peak_dice: f64,
    pub auroc: f64,
    /// Detection rate per IoU threshold 0.25..0.75.
    pub detection: Vec<(f64, f64)>,
    pub entropy_fg_mean: f64,
    pub entropy_bg_mean: f64,
}

impl ImageMetrics {
    /// Detection rate at the headline threshold 0.5.
    pub fn d50(&self) -> f64 {
        self.detection
            .iter()
            .find(|(a, _)| (a - 0.5).abs() < 1e-9)
            .map(|&(_, r)| r)
            .unwrap_or(f64::NAN)
    }
}

/// Full in-memory outcome of one image.
pub struct ImageOutcome {
    pub index: usize,
    pub seed: u64,
    pub image: ImageGrid,
    pub gt: LabelMap,
    pub points: PointAnnotationSet,
    pub prob: ProbMap,
    pub entropy: EntropyMap,
    pub entropy_norm: ImageGrid,
    pub instances: InstanceSet,
    pub dice: MetricCurve,
    pub roc: MetricCurve,
    pub metrics: ImageMetrics,
}

/// Runs synth -> sparsify -> bootstrap -> instancer -> metrics for one
/// image of the suite.
pub fn process_image(config: &RunConfig, index: usize) -> Result<ImageOutcome> {
    let seed = config.image_seed(index);
    let scene = SceneConfig {
        seed,
        ..config.scene.clone()
    };
    let (image, gt) = generate_scene(&scene)?;
    let sparsify = SparsifyConfig {
        seed: seed ^ SPARSIFY_STREAM,
        ..config.sparsify.clone()
    };
    let points = sample_points(&gt, &sparsify)?;
    let (w, h) = image.dims();
    let label_mask = rasterize_points(&points, sparsify.radius, w, h)?;
    let epsilon = estimate_epsilon(&label_mask, &gt)?;

    let features = extract_features(&image)?;
    let model = fit_pixel_bayes(&features, &label_mask, config.bins, config.laplace_alpha)?;
    let prob = predict_prob_map(&model, &features);
    let entropy = entropy_map(&prob);
    let (entropy_norm, _, _) = entropy.normalized();

    let instances = run_instancing(&entropy_norm, &points, &image, &config.instancer)?;

    let gt_fg = gt.foreground();
    let (dice, peak) = dice_curve(&entropy_norm, &gt_fg, config.n_thresholds)?;
    let (roc, auroc) = roc_auroc(&entropy_norm, &gt_fg)?;
    let det = detection_curve(&instances, &gt, &default_detection_alphas())?;

    let mut fg_sum = 0.0;
    let mut bg_sum = 0.0;
    let mut fg_n = 0usize;
    for (i, &v) in entropy.data().iter().enumerate() {
        if gt_fg.bits()[i] {
            fg_sum += v;
            fg_n += 1;
        } else {
            bg_sum += v;
        }
    }
    let bg_n = w * h - fg_n;

    let metrics = ImageMetrics {
        n_gt: gt.max_id() as usize,
        n_instances: instances.len(),
        epsilon: epsilon.epsilon,
        peak_dice_threshold: peak.0,
        peak_dice: peak.1,
        auroc,
        detection: det.samples.clone(),
        entropy_fg_mean: if fg_n > 0 { fg_sum / fg_n as f64 } else { 0.0 },
        entropy_bg_mean: if bg_n > 0 { bg_sum / bg_n as f64 } else { 0.0 },
    };

    Ok(ImageOutcome {
        index,
        seed,
        image,
        gt,
        points,
        prob,
        entropy,
        entropy_norm,
        instances,
        dice,
        roc,
        metrics,
    })
}

/// Result table of a whole suite held in memory.
pub struct SuiteResult {
    pub outcomes: Vec<std::result::Result<ImageOutcome, String>>,
}

impl SuiteResult {
    pub fn succeeded(&self) -> impl Iterator<Item = &ImageOutcome> {
        self.outcomes.iter().filter_map(|r| r.as_ref().ok())
    }

    pub fn n_failed(&self) -> usize {
        self.outcomes.iter().filter(|r| r.is_err()).count()
    }

    pub fn mean(&self, f: impl Fn(&ImageMetrics) -> f64) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for o in self.succeeded() {
            sum += f(&o.metrics);
            n += 1;
        }
        if n > 0 {
            sum / n as f64
        } else {
            f64::NAN
        }
    }
}

/// Number of workers: explicit override, else `ENTROBOOT_THREADS`, else
/// the machine's parallelism.
pub fn resolve_threads(requested: Option<usize>) -> usize {
    requested
        .or_else(|| {
            std::env::var("ENTROBOOT_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .max(1)
}

/// Index-ordered parallel map over a bounded worker pool. The output
/// only depends on `f`, never on scheduling.
fn parallel_map_indexed<T: Send>(
    n: usize,
    threads: usize,
    f: impl Fn(usize) -> T + Sync,
) -> Vec<T> {
    let threads = threads.min(n).max(1);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = f(i);
                *slots[i].lock().expect("worker never panics holding the lock") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("no poisoned slots").expect("all slots filled"))
        .collect()
}

/// Runs the whole suite in memory. Per-image failures are recorded, not
/// fatal.
pub fn run_suite(config: &RunConfig, threads: Option<usize>) -> Result<SuiteResult> {
    config.validate()?;
    let threads = resolve_threads(threads);
    let outcomes = parallel_map_indexed(config.n_images, threads, |i| {
        process_image(config, i).map_err(|e| e.to_string())
    });
    Ok(SuiteResult { outcomes })
}

/// Aggregate statistics written as `aggregate.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_images: usize,
    pub n_failed: usize,
    pub mean_epsilon: f64,
    pub mean_peak_dice: f64,
    pub mean_auroc: f64,
    pub mean_detection_050: f64,
    pub errors: Vec<String>,
}

/// Runs the suite and writes one directory per image plus `metrics.csv`,
/// `aggregate.json` and a combined COCO file. Returns the aggregate;
/// callers decide how to surface per-image failures.
pub fn run_pipeline(config: &RunConfig, threads: Option<usize>) -> Result<Aggregate> {
    let suite = run_suite(config, threads)?;
    std::fs::create_dir_all(&config.output_dir)?;

    let mut csv = String::from(
        "image,seed,nuclei,instances,epsilon,peak_dice_threshold,peak_dice,auroc,\
         det_rate_025,det_rate_050,det_rate_075,entropy_fg_mean,entropy_bg_mean,status\n",
    );
    let mut errors = Vec::new();
    let mut coco_sets: Vec<(String, &InstanceSet)> = Vec::new();
    for (i, outcome) in suite.outcomes.iter().enumerate() {
        match outcome {
            Ok(o) => {
                let dir = config.output_dir.join(format!("scene_{i:04}"));
                std::fs::create_dir_all(&dir)?;
                write_image_artifacts(&dir, o)?;
                let m = &o.metrics;
                let det = |alpha: f64| -> f64 {
                    m.detection
                        .iter()
                        .find(|(a, _)| (a - alpha).abs() < 1e-9)
                        .map(|&(_, r)| r)
                        .unwrap_or(f64::NAN)
                };
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},ok\n",
                    i,
                    o.seed,
                    m.n_gt,
                    m.n_instances,
                    fmt_g6(m.epsilon),
                    fmt_g6(m.peak_dice_threshold),
                    fmt_g6(m.peak_dice),
                    fmt_g6(m.auroc),
                    fmt_g6(det(0.25)),
                    fmt_g6(det(0.5)),
                    fmt_g6(det(0.75)),
                    fmt_g6(m.entropy_fg_mean),
                    fmt_g6(m.entropy_bg_mean),
                ));
                coco_sets.push((format!("scene_{i:04}/image.png"), &o.instances));
            }
            Err(msg) => {
                let clean = msg.replace([',', '\n'], ";");
                csv.push_str(&format!(
                    "{},{},,,,,,,,,,,,error: {clean}\n",
                    i,
                    config.image_seed(i)
                ));
                errors.push(format!("image {i}: {msg}"));
            }
        }
    }
    std::fs::write(config.output_dir.join("metrics.csv"), &csv)?;

    let dataset = coco::export_instances(&coco_sets)?;
    coco::save_dataset(config.output_dir.join("instances_coco.json"), &dataset)?;

    let aggregate = Aggregate {
        n_images: config.n_images,
        n_failed: suite.n_failed(),
        mean_epsilon: suite.mean(|m| m.epsilon),
        mean_peak_dice: suite.mean(|m| m.peak_dice),
        mean_auroc: suite.mean(|m| m.auroc),
        mean_detection_050: suite.mean(|m| m.d50()),
        errors,
    };
    io::write_json(config.output_dir.join("aggregate.json"), &aggregate)?;
    Ok(aggregate)
}

fn write_image_artifacts(dir: &Path, o: &ImageOutcome) -> Result<()> {
    io::save_image_grid(dir.join("image.png"), &o.image)?;
    io::save_label_map(dir.join("labels.png"), dir.join("labels.json"), &o.gt)?;
    io::save_points(dir.join("points.json"), &o.points)?;
    io::save_grid_normalized(dir.join("prob.png"), dir.join("prob.json"), &o.prob)?;
    io::save_grid_normalized(dir.join("entropy.png"), dir.join("entropy.json"), &o.entropy)?;
    let instances = coco::export_instances(&[("image.png".into(), &o.instances)])?;
    coco::save_dataset(dir.join("instances.json"), &instances)?;
    io::write_json(dir.join("metrics.json"), &o.metrics)?;
    Ok(())
}

/// Knob swept by an ablation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationAxis {
    Radius,
    KeepFraction,
    Jitter,
}

impl std::str::FromStr for AblationAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "radius" => Ok(AblationAxis::Radius),
            "keep" | "keep_fraction" => Ok(AblationAxis::KeepFraction),
            "jitter" => Ok(AblationAxis::Jitter),
            other => Err(Error::Config(format!(
                "unknown ablation axis {other:?} (radius|keep|jitter)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationSpec {
    pub axis: AblationAxis,
    pub values: Vec<f64>,
    pub base: RunConfig,
}

/// One ablation row: the knob value and suite means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub value: f64,
    pub mean_peak_dice: f64,
    pub mean_auroc: f64,
    pub mean_detection_050: f64,
    pub n_failed: usize,
}

/// Sweeps one sparsification knob over the fixed suite; all other seeds
/// and parameters stay put, so rows are directly comparable.
pub fn run_ablation(spec: &AblationSpec, threads: Option<usize>) -> Result<Vec<AblationRow>> {
    if spec.values.is_empty() {
        return Err(Error::InvalidParameter("ablation needs values".into()));
    }
    let mut rows = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let mut config = spec.base.clone();
        match spec.axis {
            AblationAxis::Radius => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "radius value {value} must be a positive integer"
                    )));
                }
                config.sparsify.radius = value as usize;
            }
            AblationAxis::KeepFraction => config.sparsify.keep_fraction = value,
            AblationAxis::Jitter => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "jitter value {value} must be a non-negative integer"
                    )));
                }
                config.sparsify.jitter_max = value as usize;
            }
        }
        config.validate()?;
        let suite = run_suite(&config, threads)?;
        rows.push(AblationRow {
            value,
            mean_peak_dice: suite.mean(|m| m.peak_dice),
            mean_auroc: suite.mean(|m| m.auroc),
            mean_detection_050: suite.mean(|m| m.d50()),
            n_failed: suite.n_failed(),
        });
    }
    Ok(rows)
}

/// Renders ablation rows as CSV.
pub fn ablation_csv(axis: AblationAxis, rows: &[AblationRow]) -> String {
    let axis_name = match axis {
        AblationAxis::Radius => "radius",
        AblationAxis::KeepFraction => "keep_fraction",
        AblationAxis::Jitter => "jitter",
    };
    let mut csv = format!("{axis_name},mean_peak_dice,mean_auroc,mean_det_rate_050,failed\n");
    for row in rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_g6(row.value),
            fmt_g6(row.mean_peak_dice),
            fmt_g6(row.mean_auroc),
            fmt_g6(row.mean_detection_050),
            row.n_failed
        ));
    }
    csv
}

/// Writes `theory.csv` (the entropy expansion over an epsilon-x grid)
/// and `montecarlo.csv` (simulated label rates against the product
/// rule) into the directory.
pub fn write_theory_report(dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;

    let mut theory_csv = String::from("epsilon,x,h_exact,h_approx,dominant_fraction\n");
    for k in 1..=8 {
        let eps = 10f64.powi(-k);
        for xi in 1..=10 {
            let x = xi as f64 / 10.0;
            let point = theory::dominance_report(eps, x)?;
            theory_csv.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt_g6(eps),
                fmt_g6(x),
                fmt_g6(point.h_exact),
                fmt_g6(point.h_approx),
                fmt_g6(point.dominant_fraction)
            ));
        }
    }
    std::fs::write(dir.join("theory.csv"), theory_csv)?;

    let mut mc_csv =
        String::from("p_ct,epsilon,n_trials,seed,empirical_rate,expected_rate,z_score\n");
    let (p_ct, eps, n) = (0.3, 0.05, 1_000_000u64);
    let expected = eps * p_ct;
    let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
    for seed in 0..10u64 {
        let r = theory::monte_carlo_label_sim(p_ct, eps, n, seed)?;
        let z = (r.empirical_label_rate - expected) / sigma;
        mc_csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_g6(p_ct),
            fmt_g6(eps),
            n,
            seed,
            fmt_g6(r.empirical_label_rate),
            fmt_g6(expected),
            fmt_g6(z)
        ));
    }
    std::fs::write(dir.join("montecarlo.csv"), mc_csv)?;
    Ok(())
}

/// Formats a float with six significant digits, trailing zeros trimmed,
/// matching C's `%.6g` for the magnitudes the pipeline produces.
pub fn fmt_g6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-5..6).contains(&exp) {
        let s = format!("{:.5e}", v);
        return trim_zeros_exp(&s);
    }
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    trim_zeros(&s)
}

fn trim_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}

fn trim_zeros_exp(s: &str) -> String {
    match s.split_once('e') {
        Some((mantissa, exp)) => format!("{}e{}", trim_zeros(mantissa), exp),
        None => s.to_string(),
    }
}
