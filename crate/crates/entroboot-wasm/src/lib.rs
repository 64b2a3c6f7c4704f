//! Browser demo: run the full weak-label pipeline interactively on a
//! synthetic scene and paint the stages onto canvases.
//!
//! The exported [`Demo`] regenerates a scene from slider parameters and
//! hands RGBA buffers plus a metrics summary back to the page. All
//! heavy lifting stays in the core crate; nothing here touches the DOM.

use wasm_bindgen::prelude::*;

use entroboot::bootstrap::{entropy_map, extract_features, fit_pixel_bayes, predict_prob_map};
use entroboot::instancer::{run_instancing_stages, InstancingStages};
use entroboot::metrics::{detection_curve, dice_curve, roc_auroc};
use entroboot::pipeline::RunConfig;
use entroboot::raster::{ImageGrid, LabelMap};
use entroboot::sparsify::{
    estimate_epsilon, rasterize_points, sample_points, PointAnnotationSet, SparsifyConfig,
};
use entroboot::synth::generate_scene;

#[wasm_bindgen]
pub struct Demo {
    width: usize,
    height: usize,
    image: ImageGrid,
    gt: LabelMap,
    points: PointAnnotationSet,
    entropy_norm: ImageGrid,
    stages: InstancingStages,
    metrics_json: String,
}

#[wasm_bindgen]
impl Demo {
    /// Runs synth, sparsify, bootstrap and instancing for one scene.
    #[wasm_bindgen(constructor)]
    pub fn new(
        seed: u32,
        nucleus_count: u32,
        point_radius: u32,
        keep_percent: u32,
        jitter_max: u32,
        noise_percent: u32,
    ) -> Result<Demo, JsValue> {
        let mut config = RunConfig::default();
        config.scene.seed = seed as u64;
        config.scene.nucleus_count = nucleus_count as usize;
        config.scene.noise_sigma = noise_percent as f64 / 100.0;
        config.sparsify = SparsifyConfig {
            radius: (point_radius as usize).max(1),
            keep_fraction: (keep_percent as f64 / 100.0).clamp(0.05, 1.0),
            jitter_max: jitter_max as usize,
            seed: config.scene.seed ^ 0x9e3779b97f4a7c15,
        };
        Self::build(config).map_err(|e| JsValue::from_str(&e.to_string()))
    }

    fn build(config: RunConfig) -> entroboot::Result<Demo> {
        let (image, gt) = generate_scene(&config.scene)?;
        let (w, h) = image.dims();
        let points = sample_points(&gt, &config.sparsify)?;
        let label_mask = rasterize_points(&points, config.sparsify.radius, w, h)?;
        let epsilon = estimate_epsilon(&label_mask, &gt)
            .map(|e| e.epsilon)
            .unwrap_or(f64::NAN);

        let features = extract_features(&image)?;
        let model = fit_pixel_bayes(&features, &label_mask, config.bins, config.laplace_alpha)?;
        let prob = predict_prob_map(&model, &features);
        let entropy = entropy_map(&prob);
        let (entropy_norm, _, _) = entropy.normalized();

        let stages = run_instancing_stages(&entropy_norm, &points, &image, &config.instancer)?;

        let gt_fg = gt.foreground();
        let (_, peak) = dice_curve(&entropy_norm, &gt_fg, 101)?;
        let (_, auroc) = roc_auroc(&entropy_norm, &gt_fg)?;
        let det = detection_curve(
            &stages.matched,
            &gt,
            &entroboot::metrics::default_detection_alphas(),
        )?;
        let d50 = det
            .samples
            .iter()
            .find(|(a, _)| (a - 0.5).abs() < 1e-9)
            .map(|&(_, r)| r)
            .unwrap_or(f64::NAN);
        let metrics_json = serde_json::json!({
            "nuclei": gt.max_id(),
            "points": points.len(),
            "instances": stages.matched.len(),
            "epsilon": epsilon,
            "peak_dice": peak.1,
            "auroc": auroc,
            "detection_rate_050": d50,
            "detection_curve": det.samples,
        })
        .to_string();

        Ok(Demo {
            width: w,
            height: h,
            image,
            gt,
            points,
            entropy_norm,
            stages,
            metrics_json,
        })
    }

    pub fn width(&self) -> u32 {
        self.width as u32
    }

    pub fn height(&self) -> u32 {
        self.height as u32
    }

    /// Scene image with the point annotations marked.
    pub fn render_scene(&self) -> Vec<u8> {
        let mut rgba = gray_rgba(&self.image);
        for p in &self.points {
            stamp(&mut rgba, self.width, self.height, p.x, p.y, [255, 140, 0]);
        }
        rgba
    }

    /// Normalized entropy map as a heat ramp.
    pub fn render_entropy(&self) -> Vec<u8> {
        let mut rgba = Vec::with_capacity(self.width * self.height * 4);
        for &v in self.entropy_norm.data() {
            let (r, g, b) = heat(v);
            rgba.extend_from_slice(&[r, g, b, 255]);
        }
        rgba
    }

    /// Detected instances tinted over the image, ground truth contours
    /// in white.
    pub fn render_instances(&self) -> Vec<u8> {
        let mut rgba = gray_rgba(&self.image);
        for inst in &self.stages.matched.instances {
            let tint = palette(inst.id);
            for y in inst.bbox.y0..inst.bbox.y1 {
                for x in inst.bbox.x0..inst.bbox.x1 {
                    if inst.mask.get(x - inst.bbox.x0, y - inst.bbox.y0) {
                        blend(&mut rgba, self.width, x, y, tint, 0.45);
                    }
                }
            }
        }
        // ground-truth boundaries for visual comparison
        for y in 0..self.height {
            for x in 0..self.width {
                let id = self.gt.get(x, y);
                if id == 0 {
                    continue;
                }
                let boundary = [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)].iter().any(|&(dx, dy)| {
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    nx < 0
                        || ny < 0
                        || nx >= self.width as i64
                        || ny >= self.height as i64
                        || self.gt.get(nx as usize, ny as usize) != id
                });
                if boundary {
                    blend(&mut rgba, self.width, x, y, [255, 255, 255], 0.8);
                }
            }
        }
        rgba
    }

    /// Scalar metrics and the detection curve, as a JSON string.
    pub fn metrics_json(&self) -> String {
        self.metrics_json.clone()
    }
}

fn gray_rgba(grid: &ImageGrid) -> Vec<u8> {
    let mut rgba = Vec::with_capacity(grid.data().len() * 4);
    for &v in grid.data() {
        let g = (v.clamp(0.0, 1.0) * 255.0) as u8;
        rgba.extend_from_slice(&[g, g, g, 255]);
    }
    rgba
}

fn heat(v: f64) -> (u8, u8, u8) {
    // black -> purple -> orange -> yellow
    let v = v.clamp(0.0, 1.0);
    let r = (v.powf(0.5) * 255.0) as u8;
    let g = (v * v * 255.0) as u8;
    let b = ((0.5 - (v - 0.5).abs()) * 2.0 * 160.0) as u8;
    (r, g, b)
}

fn palette(id: u32) -> [u8; 3] {
    const COLORS: [[u8; 3]; 8] = [
        [66, 135, 245],
        [52, 199, 89],
        [255, 204, 0],
        [175, 82, 222],
        [255, 59, 48],
        [90, 200, 250],
        [255, 149, 0],
        [88, 86, 214],
    ];
    COLORS[id as usize % COLORS.len()]
}

fn blend(rgba: &mut [u8], width: usize, x: usize, y: usize, color: [u8; 3], alpha: f64) {
    let idx = (y * width + x) * 4;
    for c in 0..3 {
        let old = rgba[idx + c] as f64;
        rgba[idx + c] = (old * (1.0 - alpha) + color[c] as f64 * alpha) as u8;
    }
}

fn stamp(rgba: &mut [u8], width: usize, height: usize, x: usize, y: usize, color: [u8; 3]) {
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let nx = x as i64 + dx;
            let ny = y as i64 + dy;
            if nx >= 0 && ny >= 0 && (nx as usize) < width && (ny as usize) < height {
                blend(rgba, width, nx as usize, ny as usize, color, 1.0);
            }
        }
    }
}

/// Closed-form entropy expansion over a log-epsilon sweep, for the
/// theory explorer panel: rows of (epsilon, exact, approx, fraction).
#[wasm_bindgen]
pub fn theory_sweep(x: f64, decades: u32) -> Result<Vec<f64>, JsValue> {
    let mut rows = Vec::new();
    for k in 1..=decades.max(1) {
        let eps = 10f64.powi(-(k as i32));
        let point = entroboot::bootstrap::theory::dominance_report(eps, x)
            .map_err(|e| JsValue::from_str(&e.to_string()))?;
        rows.extend_from_slice(&[eps, point.h_exact, point.h_approx, point.dominant_fraction]);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_runs_and_renders() {
        let demo = Demo::new(3, 12, 3, 100, 0, 10).unwrap();
        let scene = demo.render_scene();
        assert_eq!(scene.len(), 256 * 256 * 4);
        let entropy = demo.render_entropy();
        assert_eq!(entropy.len(), 256 * 256 * 4);
        let instances = demo.render_instances();
        assert_eq!(instances.len(), 256 * 256 * 4);
        let metrics: serde_json::Value = serde_json::from_str(&demo.metrics_json()).unwrap();
        assert_eq!(metrics["nuclei"], 12);
        assert!(metrics["auroc"].as_f64().unwrap() > 0.5);
    }

    #[test]
    fn theory_sweep_shape() {
        let rows = theory_sweep(1.0, 6).unwrap();
        assert_eq!(rows.len(), 6 * 4);
        // dominant fraction grows with each decade
        let fractions: Vec<f64> = rows.chunks(4).map(|r| r[3]).collect();
        for pair in fractions.windows(2) {
            assert!(pair[1] > pair[0]);
        }
    }
}
