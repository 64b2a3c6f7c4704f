//! Weak labels: one dot per nucleus, with the knobs that make them weaker.
//!
//! A full instance ground truth collapses to a point set (uniformly
//! sampled inside each instance), optionally thinned to a fraction of
//! the instances and jittered off-position. Rasterizing the points as
//! small disks yields the sparse training mask whose positive rate over
//! the true nucleus pixels is the label probability epsilon.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, LabelMap};

/// A single dot annotation. `source_id` is the instance the dot was
/// sampled from, or `None` once jitter has pushed it off that instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointAnnotation {
    pub x: usize,
    pub y: usize,
    pub source_id: Option<u32>,
}

pub type PointAnnotationSet = Vec<PointAnnotation>;

/// Sparsification knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparsifyConfig {
    /// Dot radius in pixels when rasterized.
    pub radius: usize,
    /// Fraction of instances that keep their dot, in `(0, 1]`.
    pub keep_fraction: f64,
    /// Maximum displacement of each dot, in pixels.
    pub jitter_max: usize,
    pub seed: u64,
}

impl Default for SparsifyConfig {
    fn default() -> Self {
        SparsifyConfig {
            radius: 3,
            keep_fraction: 1.0,
            jitter_max: 0,
            seed: 0,
        }
    }
}

impl SparsifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radius < 1 {
            return Err(Error::InvalidParameter("radius must be >= 1".into()));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "keep_fraction {} must be in (0, 1]",
                self.keep_fraction
            )));
        }
        Ok(())
    }
}

/// Draws one point uniformly inside each instance, keeps
/// `floor(keep_fraction * K)` of them, then jitters each survivor by a
/// uniform draw from the lattice disk of radius `jitter_max` (clamped
/// to the image). Deterministic in the seed.
pub fn sample_points(gt: &LabelMap, config: &SparsifyConfig) -> Result<PointAnnotationSet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (w, h) = gt.dims();

    // pixels per instance, in raster order
    let k = gt.max_id() as usize;
    let mut pixels: Vec<Vec<(usize, usize)>> = vec![Vec::new(); k];
    for y in 0..h {
        for x in 0..w {
            let id = gt.get(x, y);
            if id > 0 {
                pixels[id as usize - 1].push((x, y));
            }
        }
    }

    let mut points = Vec::with_capacity(k);
    for (i, px) in pixels.iter().enumerate() {
        if px.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "instance id {} has no pixels",
                i + 1
            )));
        }
        let (x, y) = px[rng.gen_range(0..px.len())];
        points.push(PointAnnotation {
            x,
            y,
            source_id: Some(i as u32 + 1),
        });
    }

    // uniform subset, original order preserved
    let keep = ((config.keep_fraction * k as f64).floor() as usize).min(k);
    if keep < k {
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(&mut rng);
        let mut chosen: Vec<usize> = order.into_iter().take(keep).collect();
        chosen.sort_unstable();
        points = chosen.into_iter().map(|i| points[i]).collect();
    }

    if config.jitter_max > 0 {
        let offsets = crate::sparsify::disk_offsets(config.jitter_max);
        for p in &mut points {
            let (dx, dy) = offsets[rng.gen_range(0..offsets.len())];
            let nx = (p.x as isize + dx).clamp(0, w as isize - 1) as usize;
            let ny = (p.y as isize + dy).clamp(0, h as isize - 1) as usize;
            let still_inside = p.source_id.is_some_and(|id| gt.get(nx, ny) == id);
            p.x = nx;
            p.y = ny;
            if !still_inside {
                p.source_id = None;
            }
        }
    }
    Ok(points)
}

/// Union of lattice disks of the given radius around each point,
/// clipped at the image border. Disks may spill past their nucleus.
pub fn rasterize_points(
    points: &[PointAnnotation],
    radius: usize,
    width: usize,
    height: usize,
) -> Result<BinaryMask> {
    if radius < 1 {
        return Err(Error::InvalidParameter("radius must be >= 1".into()));
    }
    let mut mask = BinaryMask::new(width, height)?;
    let offsets = disk_offsets(radius);
    for p in points {
        for &(dx, dy) in &offsets {
            let nx = p.x as isize + dx;
            let ny = p.y as isize + dy;
            if nx >= 0 && ny >= 0 && nx < width as isize && ny < height as isize {
                mask.set(nx as usize, ny as usize, true);
            }
        }
    }
    Ok(mask)
}

/// The sparse-label rate: labeled-and-true nucleus pixels over all true
/// nucleus pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonEstimate {
    pub labeled_nucleus_pixels: usize,
    pub total_nucleus_pixels: usize,
    pub epsilon: f64,
}

pub fn estimate_epsilon(label_mask: &BinaryMask, gt: &LabelMap) -> Result<EpsilonEstimate> {
    if label_mask.dims() != gt.dims() {
        return Err(Error::DimensionMismatch(format!(
            "label mask {:?} vs ground truth {:?}",
            label_mask.dims(),
            gt.dims()
        )));
    }
    let gt_fg = gt.foreground();
    let total = gt_fg.popcount();
    if total == 0 {
        return Err(Error::UndefinedEpsilon);
    }
    let labeled = label_mask.intersection_count(&gt_fg);
    Ok(EpsilonEstimate {
        labeled_nucleus_pixels: labeled,
        total_nucleus_pixels: total,
        epsilon: labeled as f64 / total as f64,
    })
}

/// Lattice disk shared by rasterization and jitter.
pub(crate) fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    crate::raster::morph_disk_offsets(radius)
}
