//! Command-line driver for the nuclei detection pipeline.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use entroboot::bootstrap::{entropy_map, extract_features, fit_pixel_bayes, predict_prob_map};
use entroboot::coco;
use entroboot::instancer::{run_instancing_stages, InstancerConfig};
use entroboot::io;
use entroboot::metrics::{
    default_detection_alphas, detection_curve, dice_curve, gt_instances, map_suite, roc_auroc,
    MatchMode,
};
use entroboot::pipeline::{
    ablation_csv, fmt_g6, run_ablation, run_pipeline, write_theory_report, AblationSpec,
    RunConfig,
};
use entroboot::sparsify::{estimate_epsilon, rasterize_points, sample_points};
use entroboot::synth::{generate_scene, SceneConfig};

#[derive(Parser)]
#[command(
    name = "entroboot",
    about = "Weakly supervised nuclei detection: entropy bootstrapping from point annotations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Flat key = value config file (CLI flags win over it).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. --set scene.nucleus_count=30.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn build(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path)
                .with_context(|| format!("reading config {}", path.display()))?,
            None => RunConfig::default(),
        };
        for kv in &self.sets {
            let (key, value) = kv
                .split_once('=')
                .with_context(|| format!("--set {kv:?} is not KEY=VALUE"))?;
            config.apply_kv(key.trim(), value.trim())?;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenes with ground truth into a run directory.
    Synth {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Number of scenes (defaults to the config's n_images).
        #[arg(short = 'n', long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample point annotations for every scene of a dataset.
    Sparsify {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 3)]
        radius: usize,
        #[arg(long, default_value_t = 1.0)]
        keep: f64,
        #[arg(long, default_value_t = 0)]
        jitter: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit the pixel Bayes model on the sparse labels and write
    /// probability and entropy maps.
    Bootstrap {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 768)]
        bins: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Convert entropy maps plus points into instance masks.
    Instance {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Also dump the per-stage rasters a_entropy.png .. e_matched.png.
        #[arg(long)]
        debug_stages: bool,
    },
    /// Score predictions against ground truth (a dataset directory or
    /// a COCO file).
    Eval {
        /// Dataset directory with per-scene labels.png (and optionally
        /// entropy.png for the Dice/AUROC columns).
        #[arg(long, required_unless_present = "gt")]
        dataset: Option<PathBuf>,
        /// Ground truth as a combined COCO file instead of a dataset.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Combined COCO predictions; defaults to each scene's
        /// instances.json when a dataset is given.
        #[arg(long, required_unless_present = "dataset")]
        pred: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full run: synth, sparsify, bootstrap, instance and metrics.
    Pipeline {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        n_images: Option<usize>,
        #[arg(long)]
        master_seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Sweep one sparsification knob over the fixed suite.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        /// radius | keep | jitter
        #[arg(long)]
        axis: String,
        /// Comma-separated knob values, e.g. 1,3,6,10.
        #[arg(long)]
        values: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Emit the closed-form entropy table and Monte Carlo comparison.
    VerifyTheory {
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge per-scene instance files into one COCO dataset.
    ExportCoco {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Synth {
            config,
            out,
            n,
            seed,
        } => cmd_synth(config.build()?, out, n, seed),
        Command::Sparsify {
            dataset,
            radius,
            keep,
            jitter,
            seed,
        } => cmd_sparsify(dataset, radius, keep, jitter, seed),
        Command::Bootstrap {
            dataset,
            bins,
            alpha,
        } => cmd_bootstrap(dataset, bins, alpha),
        Command::Instance {
            dataset,
            config,
            debug_stages,
        } => cmd_instance(dataset, config.build()?.instancer, debug_stages),
        Command::Eval {
            dataset,
            gt,
            pred,
            out,
        } => cmd_eval(dataset, gt, pred, out),
        Command::Pipeline {
            config,
            out,
            n_images,
            master_seed,
            threads,
        } => {
            let mut run_config = config.build()?;
            if let Some(out) = out {
                run_config.output_dir = out;
            }
            if let Some(n) = n_images {
                run_config.n_images = n;
            }
            if let Some(seed) = master_seed {
                run_config.master_seed = seed;
            }
            let aggregate = run_pipeline(&run_config, threads)?;
            println!(
                "pipeline: {} images, {} failed, mean peak dice {}, mean AUROC {}, mean D_0.5 {}",
                aggregate.n_images,
                aggregate.n_failed,
                fmt_g6(aggregate.mean_peak_dice),
                fmt_g6(aggregate.mean_auroc),
                fmt_g6(aggregate.mean_detection_050),
            );
            if aggregate.n_failed > 0 {
                for e in &aggregate.errors {
                    eprintln!("  {e}");
                }
                bail!("{} image(s) failed", aggregate.n_failed);
            }
            Ok(())
        }
        Command::Ablate {
            config,
            axis,
            values,
            out,
            threads,
        } => {
            let axis = axis.parse()?;
            let values: Vec<f64> = values
                .split(',')
                .map(|v| v.trim().parse::<f64>().context("bad ablation value"))
                .collect::<Result<_>>()?;
            let spec = AblationSpec {
                axis,
                values,
                base: config.build()?,
            };
            let rows = run_ablation(&spec, threads)?;
            std::fs::create_dir_all(&out)?;
            let csv = ablation_csv(axis, &rows);
            std::fs::write(out.join("ablation.csv"), &csv)?;
            print!("{csv}");
            Ok(())
        }
        Command::VerifyTheory { out } => {
            write_theory_report(&out)?;
            println!("wrote {}/theory.csv and montecarlo.csv", out.display());
            Ok(())
        }
        Command::ExportCoco { dataset, out } => cmd_export_coco(dataset, out),
    }
}

/// Scene subdirectories of a dataset, or the directory itself when it
/// holds an image.png directly.
fn scene_dirs(dataset: &Path) -> Result<Vec<PathBuf>> {
    if dataset.join("image.png").exists() {
        return Ok(vec![dataset.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dataset)
        .with_context(|| format!("reading dataset {}", dataset.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.join("image.png").exists())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!(
            "no scenes found in {} (need subdirectories with image.png)",
            dataset.display()
        );
    }
    Ok(dirs)
}

fn cmd_synth(config: RunConfig, out: PathBuf, n: Option<usize>, seed: Option<u64>) -> Result<()> {
    let n = n.unwrap_or(config.n_images);
    let master = seed.unwrap_or(config.master_seed);
    std::fs::create_dir_all(&out)?;
    for i in 0..n {
        let scene = SceneConfig {
            seed: master ^ i as u64,
            ..config.scene.clone()
        };
        let (image, labels) = generate_scene(&scene)?;
        let dir = out.join(format!("scene_{i:04}"));
        std::fs::create_dir_all(&dir)?;
        io::save_image_grid(dir.join("image.png"), &image)?;
        io::save_label_map(dir.join("labels.png"), dir.join("labels.json"), &labels)?;
    }
    println!("wrote {n} scene(s) under {}", out.display());
    Ok(())
}

fn cmd_sparsify(dataset: PathBuf, radius: usize, keep: f64, jitter: usize, seed: u64) -> Result<()> {
    for (i, dir) in scene_dirs(&dataset)?.iter().enumerate() {
        let gt = io::load_label_map(dir.join("labels.png"))
            .with_context(|| format!("{} has no labels.png", dir.display()))?;
        let config = entroboot::sparsify::SparsifyConfig {
            radius,
            keep_fraction: keep,
            jitter_max: jitter,
            seed: seed ^ i as u64,
        };
        let points = sample_points(&gt, &config)?;
        let mask = rasterize_points(&points, radius, gt.width(), gt.height())?;
        io::save_points(dir.join("points.json"), &points)?;
        save_mask(&dir.join("points_mask.png"), &mask)?;
        match estimate_epsilon(&mask, &gt) {
            Ok(eps) => println!(
                "{}: {} points, epsilon {}",
                dir.display(),
                points.len(),
                fmt_g6(eps.epsilon)
            ),
            Err(_) => println!("{}: {} points (no nuclei)", dir.display(), points.len()),
        }
    }
    Ok(())
}

fn cmd_bootstrap(dataset: PathBuf, bins: usize, alpha: f64) -> Result<()> {
    for dir in scene_dirs(&dataset)? {
        let image = io::load_image_grid(dir.join("image.png"))?;
        let points = io::load_points(dir.join("points.json"))
            .with_context(|| format!("{}: run sparsify first", dir.display()))?;
        let (w, h) = image.dims();
        // prefer the rasterized label mask written by sparsify; fall
        // back to default-radius disks around the stored points
        let labels = match io::load_image_grid(dir.join("points_mask.png")) {
            Ok(grid) => entroboot::raster::BinaryMask::from_fn(w, h, |x, y| grid.get(x, y) > 0.5)?,
            Err(_) => rasterize_points(&points, 3, w, h)?,
        };
        let features = extract_features(&image)?;
        let model = fit_pixel_bayes(&features, &labels, bins, alpha)?;
        let prob = predict_prob_map(&model, &features);
        let entropy = entropy_map(&prob);
        io::save_grid_normalized(dir.join("prob.png"), dir.join("prob.json"), &prob)?;
        io::save_grid_normalized(dir.join("entropy.png"), dir.join("entropy.json"), &entropy)?;
        println!("{}: entropy map written", dir.display());
    }
    Ok(())
}

fn cmd_instance(dataset: PathBuf, config: InstancerConfig, debug_stages: bool) -> Result<()> {
    for dir in scene_dirs(&dataset)? {
        let image = io::load_image_grid(dir.join("image.png"))?;
        let entropy = io::load_image_grid(dir.join("entropy.png"))
            .with_context(|| format!("{}: run bootstrap first", dir.display()))?;
        let points = io::load_points(dir.join("points.json"))?;
        let stages = run_instancing_stages(&entropy, &points, &image, &config)?;
        let dataset_file = coco::export_instances(&[("image.png".into(), &stages.matched)])?;
        coco::save_dataset(dir.join("instances.json"), &dataset_file)?;
        if debug_stages {
            let (norm, _, _) = stages.blurred_entropy.normalized();
            io::save_image_grid(dir.join("a_entropy.png"), &norm)?;
            let (norm, _, _) = stages.suppressed.normalized();
            io::save_image_grid(dir.join("b_suppressed.png"), &norm)?;
            save_mask(&dir.join("c_binary.png"), &stages.cleaned)?;
            io::save_label_map(
                dir.join("d_watershed.png"),
                dir.join("d_watershed.json"),
                &stages.watershed,
            )?;
            let matched = stages.matched.to_label_map()?;
            io::save_label_map(dir.join("e_matched.png"), dir.join("e_matched.json"), &matched)?;
        }
        println!("{}: {} instance(s)", dir.display(), stages.matched.len());
    }
    Ok(())
}

fn save_mask(path: &Path, mask: &entroboot::raster::BinaryMask) -> Result<()> {
    let grid = entroboot::raster::ImageGrid::from_fn(mask.width(), mask.height(), |x, y| {
        if mask.get(x, y) {
            1.0
        } else {
            0.0
        }
    })?;
    io::save_image_grid(path, &grid)?;
    Ok(())
}

fn cmd_eval(
    dataset: Option<PathBuf>,
    gt_file: Option<PathBuf>,
    pred: Option<PathBuf>,
    out: PathBuf,
) -> Result<()> {
    std::fs::create_dir_all(&out)?;
    let combined = pred.map(coco::load_dataset).transpose()?;
    let gt_coco = gt_file.map(coco::load_dataset).transpose()?;

    // one unit per image: ground truth labels, optional entropy map,
    // and the predictions to score
    struct Unit {
        gt: entroboot::raster::LabelMap,
        entropy: Option<entroboot::raster::ImageGrid>,
        instances: entroboot::instancer::InstanceSet,
        preds: Vec<entroboot::metrics::ScoredPrediction>,
    }

    let mut units = Vec::new();
    match (&dataset, &gt_coco) {
        (Some(dataset), _) => {
            for (i, dir) in scene_dirs(dataset)?.iter().enumerate() {
                let gt = io::load_label_map(dir.join("labels.png"))?;
                let (instances, preds) = match &combined {
                    Some(ds) => (
                        coco::instances_for_image(ds, i as u64 + 1)?,
                        coco::predictions_for_image(ds, i as u64 + 1)?,
                    ),
                    None => {
                        let ds = coco::load_dataset(dir.join("instances.json"))
                            .with_context(|| format!("{}: run instance first", dir.display()))?;
                        (
                            coco::instances_for_image(&ds, 1)?,
                            coco::predictions_for_image(&ds, 1)?,
                        )
                    }
                };
                units.push(Unit {
                    gt,
                    entropy: io::load_image_grid(dir.join("entropy.png")).ok(),
                    instances,
                    preds,
                });
            }
        }
        (None, Some(gt_ds)) => {
            let preds_ds = combined
                .as_ref()
                .context("--pred is required with a COCO ground truth")?;
            for image in &gt_ds.images {
                let gt = coco::instances_for_image(gt_ds, image.id)?.to_label_map()?;
                units.push(Unit {
                    gt,
                    entropy: None,
                    instances: coco::instances_for_image(preds_ds, image.id)?,
                    preds: coco::predictions_for_image(preds_ds, image.id)?,
                });
            }
        }
        (None, None) => bail!("eval needs --dataset or --gt"),
    }

    let mut metrics_csv = String::from(
        "image,nuclei,predictions,peak_dice_threshold,peak_dice,auroc,det_rate_050,map50,map75,map\n",
    );
    let mut curves_csv = String::from("image,curve,x,value\n");
    let mut sums = [0.0f64; 7];
    let mut counts = [0usize; 7];

    for (i, unit) in units.iter().enumerate() {
        let gts = gt_instances(&unit.gt);

        let det = detection_curve(&unit.instances, &unit.gt, &default_detection_alphas())?;
        for &(alpha, rate) in &det.samples {
            curves_csv.push_str(&format!(
                "{i},detection,{},{}\n",
                fmt_g6(alpha),
                fmt_g6(rate)
            ));
        }
        let d50 = det
            .samples
            .iter()
            .find(|(a, _)| (a - 0.5).abs() < 1e-9)
            .map(|&(_, r)| r)
            .unwrap_or(f64::NAN);

        // entropy-quality metrics when the scene has an entropy map
        let (peak_t, peak_dice, auroc) = match &unit.entropy {
            Some(entropy) => {
                let fg = unit.gt.foreground();
                let (dice_c, peak) = dice_curve(entropy, &fg, 101)?;
                let (roc, auroc) = roc_auroc(entropy, &fg)?;
                for &(t, v) in &dice_c.samples {
                    curves_csv.push_str(&format!("{i},dice,{},{}\n", fmt_g6(t), fmt_g6(v)));
                }
                for &(fpr, tpr) in &roc.samples {
                    curves_csv.push_str(&format!("{i},roc,{},{}\n", fmt_g6(fpr), fmt_g6(tpr)));
                }
                (peak.0, peak.1, auroc)
            }
            None => (f64::NAN, f64::NAN, f64::NAN),
        };

        let scores = map_suite(&unit.preds, &gts, MatchMode::Bbox)?;
        metrics_csv.push_str(&format!(
            "{i},{},{},{},{},{},{},{},{},{}\n",
            gts.len(),
            unit.instances.len(),
            fmt_g6(peak_t),
            fmt_g6(peak_dice),
            fmt_g6(auroc),
            fmt_g6(d50),
            fmt_g6(scores.map50),
            fmt_g6(scores.map75),
            fmt_g6(scores.map),
        ));
        for ((slot, count), v) in sums.iter_mut().zip(&mut counts).zip([
            peak_t,
            peak_dice,
            auroc,
            d50,
            scores.map50,
            scores.map75,
            scores.map,
        ]) {
            if !v.is_nan() {
                *slot += v;
                *count += 1;
            }
        }
    }

    let mean = |i: usize| {
        if counts[i] > 0 {
            fmt_g6(sums[i] / counts[i] as f64)
        } else {
            "nan".to_string()
        }
    };
    metrics_csv.push_str(&format!(
        "mean,,,{},{},{},{},{},{},{}\n",
        mean(0),
        mean(1),
        mean(2),
        mean(3),
        mean(4),
        mean(5),
        mean(6),
    ));
    std::fs::write(out.join("metrics.csv"), metrics_csv)?;
    std::fs::write(out.join("curves.csv"), curves_csv)?;
    println!("wrote {}/metrics.csv and curves.csv", out.display());
    Ok(())
}

fn cmd_export_coco(dataset: PathBuf, out: PathBuf) -> Result<()> {
    let dirs = scene_dirs(&dataset)?;
    let mut sets = Vec::new();
    for (i, dir) in dirs.iter().enumerate() {
        let ds = coco::load_dataset(dir.join("instances.json"))
            .with_context(|| format!("{}: run instance first", dir.display()))?;
        let set = coco::instances_for_image(&ds, 1)?;
        sets.push((format!("scene_{i:04}/image.png"), set));
    }
    let refs: Vec<(String, &entroboot::instancer::InstanceSet)> =
        sets.iter().map(|(n, s)| (n.clone(), s)).collect();
    let merged = coco::export_instances(&refs)?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    coco::save_dataset(&out, &merged)?;
    println!(
        "wrote {} ({} images, {} annotations)",
        out.display(),
        merged.images.len(),
        merged.annotations.len()
    );
    Ok(())
}
