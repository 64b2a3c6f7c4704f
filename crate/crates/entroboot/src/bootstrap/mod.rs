//! Entropy bootstrapping: estimate the per-pixel label distribution from
//! sparse point labels and take its entropy.
//!
//! The estimator is a histogram naive Bayes over three photometric
//! features. Trained on the sparse labels (dots positive, everything
//! else negative) its posterior approximates the probability a pixel is
//! *labeled* nucleus, which sits near the label rate epsilon wherever
//! the pixel looks like a nucleus and near zero elsewhere. The binary
//! entropy of that posterior therefore rises on nucleus pixels and
//! vanishes on background, which is what the downstream instancer
//! consumes. The closed-form analysis of this effect lives in [`theory`].

pub mod theory;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{gaussian_blur, reflect_index, BinaryMask, ImageGrid};

/// Per-pixel posterior probability of the positive label, in `[0, 1]`.
pub type ProbMap = ImageGrid;
/// Per-pixel binary entropy in nats, in `[0, ln 2]`.
pub type EntropyMap = ImageGrid;

pub const NUM_FEATURES: usize = 3;

/// Per-pixel feature vectors: raw intensity, blurred intensity
/// (sigma 2) and local standard deviation over a 5x5 window.
#[derive(Debug, Clone)]
pub struct FeatureStack {
    width: usize,
    height: usize,
    values: Vec<[f64; NUM_FEATURES]>,
}

impl FeatureStack {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; NUM_FEATURES] {
        self.values[y * self.width + x]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64; NUM_FEATURES]> {
        self.values.iter()
    }
}

const FEATURE_BLUR_SIGMA: f64 = 2.0;
const STD_WINDOW_RADIUS: isize = 2;

/// Extracts the three photometric features for every pixel.
pub fn extract_features(image: &ImageGrid) -> Result<FeatureStack> {
    if !image.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    let (w, h) = image.dims();
    let blurred = gaussian_blur(image, FEATURE_BLUR_SIGMA)?;

    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for dy in -STD_WINDOW_RADIUS..=STD_WINDOW_RADIUS {
                let sy = reflect_index(y as isize + dy, h);
                for dx in -STD_WINDOW_RADIUS..=STD_WINDOW_RADIUS {
                    let sx = reflect_index(x as isize + dx, w);
                    let v = image.get(sx, sy);
                    sum += v;
                    sum_sq += v * v;
                }
            }
            let n = ((2 * STD_WINDOW_RADIUS + 1) * (2 * STD_WINDOW_RADIUS + 1)) as f64;
            let mean = sum / n;
            let var = (sum_sq / n - mean * mean).max(0.0);
            values.push([image.get(x, y), blurred.get(x, y), var.sqrt()]);
        }
    }
    Ok(FeatureStack {
        width: w,
        height: h,
        values,
    })
}

/// Histogram naive Bayes over the feature stack.
///
/// Intensity-like features are binned over `[0, 1]`; the spread feature
/// over `[0, observed max]`. Likelihoods carry Laplace smoothing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PixelBayesModel {
    bins: usize,
    laplace_alpha: f64,
    /// ln P(class); index 0 = negative, 1 = positive
    log_priors: [f64; 2],
    /// `log_likelihood[class][feature][bin]`
    log_likelihood: [Vec<Vec<f64>>; 2],
    /// inclusive value span per feature
    spans: [(f64, f64); NUM_FEATURES],
}

/// Fits the naive Bayes model on a sparse label mask (true = positive).
pub fn fit_pixel_bayes(
    features: &FeatureStack,
    labels: &BinaryMask,
    bins: usize,
    laplace_alpha: f64,
) -> Result<PixelBayesModel> {
    if features.dims() != labels.dims() {
        return Err(Error::DimensionMismatch(format!(
            "features {:?} vs labels {:?}",
            features.dims(),
            labels.dims()
        )));
    }
    if bins == 0 {
        return Err(Error::InvalidParameter("bins must be >= 1".into()));
    }
    if laplace_alpha <= 0.0 {
        return Err(Error::InvalidParameter(
            "laplace_alpha must be positive".into(),
        ));
    }
    let n_pos = labels.popcount();
    let n = labels.bits().len();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassLabels);
    }

    let mut spans = [(0.0f64, 1.0f64); NUM_FEATURES];
    let mut std_max = 0.0f64;
    for f in features.iter() {
        std_max = std_max.max(f[2]);
    }
    // a flat image has zero spread everywhere; keep the span non-degenerate
    spans[2] = (0.0, if std_max > 0.0 { std_max } else { 1.0 });

    let mut counts = [vec![vec![0u64; bins]; NUM_FEATURES], vec![vec![0u64; bins]; NUM_FEATURES]];
    let (w, h) = features.dims();
    for y in 0..h {
        for x in 0..w {
            let class = labels.get(x, y) as usize;
            let f = features.get(x, y);
            for (fi, &v) in f.iter().enumerate() {
                counts[class][fi][bin_index(v, spans[fi], bins)] += 1;
            }
        }
    }

    let class_totals = [n_neg as f64, n_pos as f64];
    let mut log_likelihood = [
        vec![vec![0.0f64; bins]; NUM_FEATURES],
        vec![vec![0.0f64; bins]; NUM_FEATURES],
    ];
    for class in 0..2 {
        let denom = class_totals[class] + laplace_alpha * bins as f64;
        for fi in 0..NUM_FEATURES {
            for b in 0..bins {
                let p = (counts[class][fi][b] as f64 + laplace_alpha) / denom;
                log_likelihood[class][fi][b] = p.ln();
            }
        }
    }

    Ok(PixelBayesModel {
        bins,
        laplace_alpha,
        log_priors: [
            (n_neg as f64 / n as f64).ln(),
            (n_pos as f64 / n as f64).ln(),
        ],
        log_likelihood,
        spans,
    })
}

const PROB_CLAMP: f64 = 1e-9;

impl PixelBayesModel {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn laplace_alpha(&self) -> f64 {
        self.laplace_alpha
    }

    pub fn priors(&self) -> [f64; 2] {
        [self.log_priors[0].exp(), self.log_priors[1].exp()]
    }

    /// Smoothed likelihood of one feature bin for a class (0 = negative).
    pub fn likelihood(&self, class: usize, feature: usize, bin: usize) -> f64 {
        self.log_likelihood[class][feature][bin].exp()
    }

    /// Posterior probability of the positive label for one feature vector.
    pub fn posterior(&self, f: &[f64; NUM_FEATURES]) -> f64 {
        let mut log_pos = self.log_priors[1];
        let mut log_neg = self.log_priors[0];
        for (fi, &v) in f.iter().enumerate() {
            let b = bin_index(v, self.spans[fi], self.bins);
            log_pos += self.log_likelihood[1][fi][b];
            log_neg += self.log_likelihood[0][fi][b];
        }
        // 1 / (1 + exp(log_neg - log_pos)), stable in log space
        let p = 1.0 / (1.0 + (log_neg - log_pos).exp());
        p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    }
}

/// Posterior map over a full feature stack.
pub fn predict_prob_map(model: &PixelBayesModel, features: &FeatureStack) -> ProbMap {
    let (w, h) = features.dims();
    ImageGrid::from_vec(
        w,
        h,
        features.iter().map(|f| model.posterior(f)).collect(),
    )
    .expect("feature stack dims are valid")
}

/// Binary entropy in nats: `H = -p ln p - (1-p) ln(1-p)`, with
/// `0 ln 0 = 0`.
pub fn entropy_map(p: &ProbMap) -> EntropyMap {
    p.map(binary_entropy)
}

/// Scalar binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p), "probability out of range: {p}");
    let a = if p > 0.0 { -p * p.ln() } else { 0.0 };
    let q = 1.0 - p;
    let b = if q > 0.0 { -q * q.ln() } else { 0.0 };
    a + b
}

fn bin_index(v: f64, span: (f64, f64), bins: usize) -> usize {
    let (lo, hi) = span;
    if hi <= lo {
        return 0;
    }
    let t = (v - lo) / (hi - lo);
    ((t * bins as f64) as isize).clamp(0, bins as isize - 1) as usize
}
