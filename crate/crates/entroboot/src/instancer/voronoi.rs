//! Discrete Voronoi partition of the image by the point annotations.

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ImageGrid, LabelMap};
use crate::sparsify::PointAnnotation;

/// Assigns every pixel the index of its nearest point (squared Euclidean
/// distance, ties to the lower point index).
///
/// Region ids are the 0-based point indices; a Voronoi partition has no
/// background, so the label-map convention of 0 meaning background does
/// not apply here.
pub fn voronoi_regions(
    points: &[PointAnnotation],
    width: usize,
    height: usize,
) -> Result<LabelMap> {
    if points.is_empty() {
        return Err(Error::NoSeeds);
    }
    let mut ids = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let mut best = u64::MAX;
            let mut best_idx = 0u32;
            for (i, p) in points.iter().enumerate() {
                let dx = p.x as i64 - x as i64;
                let dy = p.y as i64 - y as i64;
                let d = (dx * dx + dy * dy) as u64;
                if d < best {
                    best = d;
                    best_idx = i as u32;
                }
            }
            ids.push(best_idx);
        }
    }
    LabelMap::from_vec(width, height, ids)
}

/// Marks every pixel whose 4-neighborhood touches a different region.
/// Both sides of each boundary are marked, so the edge band is one to
/// two pixels thick.
pub fn voronoi_edges(regions: &LabelMap) -> BinaryMask {
    let (w, h) = regions.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        let id = regions.get(x, y);
        let neighbors = [
            (x.wrapping_sub(1), y),
            (x + 1, y),
            (x, y.wrapping_sub(1)),
            (x, y + 1),
        ];
        neighbors
            .iter()
            .any(|&(nx, ny)| nx < w && ny < h && regions.get(nx, ny) != id)
    })
    .expect("dims validated by input map")
}

/// Zeroes the entropy on edge pixels, leaving everything else untouched.
/// Zero is the global minimum of a normalized entropy map, so the band
/// acts as a hard barrier for thresholding and flooding.
pub fn suppress_edges(entropy: &ImageGrid, edges: &BinaryMask) -> Result<ImageGrid> {
    if entropy.dims() != edges.dims() {
        return Err(Error::DimensionMismatch(format!(
            "entropy {:?} vs edges {:?}",
            entropy.dims(),
            edges.dims()
        )));
    }
    let (w, h) = entropy.dims();
    ImageGrid::from_fn(w, h, |x, y| {
        if edges.get(x, y) {
            0.0
        } else {
            entropy.get(x, y)
        }
    })
}
