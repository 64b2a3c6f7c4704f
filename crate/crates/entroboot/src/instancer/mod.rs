//! Deterministic conversion of an entropy map plus point annotations
//! into instance masks.
//!
//! The stages, in order: blur the entropy, zero it along the Voronoi
//! edges of the points, adaptively threshold, clean up with a
//! morphological opening and a minimum-area filter, box the remaining
//! components into ROIs, watershed each ROI into instances, and keep
//! only the instance closest to each point. Everything is a pure
//! function of its inputs; there is no randomness anywhere.

mod voronoi;
mod watershed;

pub use voronoi::{suppress_edges, voronoi_edges, voronoi_regions};
pub use watershed::watershed_roi;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{
    component_bboxes, connected_components, gaussian_blur, gaussian_blur_windowed, open, BBox,
    BinaryMask, Connectivity, ImageGrid, LabelMap,
};
use crate::sparsify::PointAnnotation;

/// Stage parameters. The defaults are tuned for 256x256 scenes with
/// nucleus radii around 6-16 pixels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstancerConfig {
    /// Smoothing applied to the entropy map and to the image the
    /// watershed floods over; 0 disables.
    pub blur_sigma: f64,
    /// Adaptive threshold window, odd and >= 3. Roughly one nucleus
    /// diameter plus margin.
    pub threshold_window: usize,
    /// A pixel must exceed its local Gaussian mean by this much to be
    /// foreground (normalized units).
    pub threshold_offset: f64,
    /// Components and instances below this pixel count are dropped.
    pub min_area: usize,
    /// Opening radius for noise cleanup.
    pub open_radius: usize,
    /// Watershed markers are distance-transform peaks at least this
    /// fraction of the per-ROI maximum, in (0, 1).
    pub marker_dt_fraction: f64,
    /// Instances farther than this from every point are discarded.
    pub match_max_dist: f64,
}

impl Default for InstancerConfig {
    fn default() -> Self {
        InstancerConfig {
            blur_sigma: 2.0,
            threshold_window: 21,
            threshold_offset: 0.02,
            min_area: 10,
            open_radius: 1,
            marker_dt_fraction: 0.5,
            match_max_dist: 20.0,
        }
    }
}

impl InstancerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold_window < 3 || self.threshold_window.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "threshold_window {} must be odd and >= 3",
                self.threshold_window
            )));
        }
        if self.min_area < 1 {
            return Err(Error::InvalidParameter("min_area must be >= 1".into()));
        }
        if !(self.marker_dt_fraction > 0.0 && self.marker_dt_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "marker_dt_fraction {} must be in (0, 1)",
                self.marker_dt_fraction
            )));
        }
        if self.blur_sigma < 0.0 || self.match_max_dist < 0.0 {
            return Err(Error::InvalidParameter(
                "blur_sigma and match_max_dist must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// One detected instance: a tight mask inside its bounding box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub id: u32,
    pub bbox: BBox,
    /// Mask of `bbox` dimensions; true pixels belong to the instance.
    pub mask: BinaryMask,
    /// Index into the point set this instance was matched to.
    pub matched_point: Option<usize>,
}

impl Instance {
    pub fn area(&self) -> usize {
        self.mask.popcount()
    }

    /// Whether the image-coordinate pixel belongs to this instance.
    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.bbox.contains(x, y) && self.mask.get(x - self.bbox.x0, y - self.bbox.y0)
    }
}

/// Detected instances of one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceSet {
    pub width: usize,
    pub height: usize,
    pub instances: Vec<Instance>,
}

impl InstanceSet {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Paints instance ids into a label map (later instances win, but
    /// watershed instances never overlap).
    pub fn to_label_map(&self) -> Result<LabelMap> {
        let mut labels = LabelMap::new(self.width, self.height)?;
        for inst in &self.instances {
            for y in inst.bbox.y0..inst.bbox.y1 {
                for x in inst.bbox.x0..inst.bbox.x1 {
                    if inst.mask.get(x - inst.bbox.x0, y - inst.bbox.y0) {
                        labels.set(x, y, inst.id);
                    }
                }
            }
        }
        Ok(labels)
    }
}

/// Binarizes against a locally Gaussian-weighted mean: a pixel is
/// foreground iff its value exceeds the local mean by more than
/// `offset`. The local mean uses `sigma = window / 6` truncated at the
/// window (reflected borders), so a constant image thresholds to all
/// background for any positive offset.
pub fn adaptive_threshold(grid: &ImageGrid, window: usize, offset: f64) -> Result<BinaryMask> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "window {window} must be odd and >= 3"
        )));
    }
    let sigma = window as f64 / 6.0;
    let local_mean = gaussian_blur_windowed(grid, sigma, window / 2)?;
    let (w, h) = grid.dims();
    BinaryMask::from_fn(w, h, |x, y| grid.get(x, y) > local_mean.get(x, y) + offset)
}

/// Connected components of the mask, boxed and grown by a 2-pixel
/// margin (clipped to the image) to give the watershed room.
pub fn extract_rois(mask: &BinaryMask) -> Vec<BBox> {
    let labels = connected_components(mask, Connectivity::Eight);
    let (w, h) = mask.dims();
    component_bboxes(&labels)
        .into_iter()
        .map(|(_, b)| b.dilated(2, w, h))
        .collect()
}

/// Keeps for each point the cheapest co-located instance, without double
/// counting. Cost is 0 for a point inside the mask, else the Euclidean
/// distance to the nearest mask pixel; pairs beyond `max_dist` and
/// instances that win no point are dropped.
pub fn match_to_points(
    set: InstanceSet,
    points: &[PointAnnotation],
    max_dist: f64,
) -> InstanceSet {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (ii, inst) in set.instances.iter().enumerate() {
        for (pi, p) in points.iter().enumerate() {
            let cost = point_to_instance_cost(p, inst);
            if cost <= max_dist {
                candidates.push((cost, pi, ii));
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let mut point_taken = vec![false; points.len()];
    let mut instance_match: Vec<Option<usize>> = vec![None; set.instances.len()];
    for (_, pi, ii) in candidates {
        if point_taken[pi] || instance_match[ii].is_some() {
            continue;
        }
        point_taken[pi] = true;
        instance_match[ii] = Some(pi);
    }

    let mut instances: Vec<Instance> = set
        .instances
        .into_iter()
        .zip(instance_match)
        .filter_map(|(inst, m)| {
            m.map(|pi| Instance {
                matched_point: Some(pi),
                ..inst
            })
        })
        .collect();
    // renumber to keep ids dense after the drop
    for (i, inst) in instances.iter_mut().enumerate() {
        inst.id = i as u32 + 1;
    }
    InstanceSet {
        width: set.width,
        height: set.height,
        instances,
    }
}

fn point_to_instance_cost(p: &PointAnnotation, inst: &Instance) -> f64 {
    if inst.contains(p.x, p.y) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for y in inst.bbox.y0..inst.bbox.y1 {
        for x in inst.bbox.x0..inst.bbox.x1 {
            if inst.mask.get(x - inst.bbox.x0, y - inst.bbox.y0) {
                let dx = x as f64 - p.x as f64;
                let dy = y as f64 - p.y as f64;
                best = best.min((dx * dx + dy * dy).sqrt());
            }
        }
    }
    best
}

/// Intermediate rasters of one instancing run, for debug dumps and
/// visualization.
#[derive(Debug, Clone)]
pub struct InstancingStages {
    pub blurred_entropy: ImageGrid,
    pub voronoi_edges: BinaryMask,
    pub suppressed: ImageGrid,
    pub thresholded: BinaryMask,
    pub cleaned: BinaryMask,
    pub rois: Vec<BBox>,
    pub watershed: LabelMap,
    pub matched: InstanceSet,
}

/// Runs the full entropy-to-instances conversion.
///
/// `entropy` is expected min-max normalized to `[0, 1]`; `image` is the
/// raw intensity grid the watershed smooths and floods over.
pub fn run_instancing(
    entropy: &ImageGrid,
    points: &[PointAnnotation],
    image: &ImageGrid,
    config: &InstancerConfig,
) -> Result<InstanceSet> {
    run_instancing_stages(entropy, points, image, config).map(|s| s.matched)
}

/// As [`run_instancing`] but keeps every intermediate raster.
pub fn run_instancing_stages(
    entropy: &ImageGrid,
    points: &[PointAnnotation],
    image: &ImageGrid,
    config: &InstancerConfig,
) -> Result<InstancingStages> {
    config.validate()?;
    if entropy.dims() != image.dims() {
        return Err(Error::DimensionMismatch(format!(
            "entropy {:?} vs image {:?}",
            entropy.dims(),
            image.dims()
        )));
    }
    let (w, h) = entropy.dims();

    let blurred = if config.blur_sigma > 0.0 {
        gaussian_blur(entropy, config.blur_sigma)?
    } else {
        entropy.clone()
    };

    let regions = voronoi_regions(points, w, h)?;
    let edges = voronoi_edges(&regions);
    let suppressed = suppress_edges(&blurred, &edges)?;

    let thresholded =
        adaptive_threshold(&suppressed, config.threshold_window, config.threshold_offset)?;

    let opened = open(&thresholded, config.open_radius);
    let cleaned = drop_small_components(&opened, config.min_area);

    let rois = extract_rois(&cleaned);
    let image_smoothed = if config.blur_sigma > 0.0 {
        gaussian_blur(image, config.blur_sigma)?
    } else {
        image.clone()
    };

    // Watershed each ROI and relabel globally, ROIs in scan order.
    let mut global = LabelMap::new(w, h)?;
    let mut next_label = 0u32;
    for roi in &rois {
        let local = watershed_roi(&image_smoothed, &cleaned, roi, config);
        let local_max = local.max_id();
        if local_max == 0 {
            continue;
        }
        for y in 0..roi.height() {
            for x in 0..roi.width() {
                let id = local.get(x, y);
                if id > 0 {
                    global.set(roi.x0 + x, roi.y0 + y, next_label + id);
                }
            }
        }
        next_label += local_max;
    }

    let instances = instances_from_labels(&global, config.min_area);
    let matched = match_to_points(
        InstanceSet {
            width: w,
            height: h,
            instances,
        },
        points,
        config.match_max_dist,
    );

    Ok(InstancingStages {
        blurred_entropy: blurred,
        voronoi_edges: edges,
        suppressed,
        thresholded,
        cleaned,
        rois,
        watershed: global,
        matched,
    })
}

fn drop_small_components(mask: &BinaryMask, min_area: usize) -> BinaryMask {
    let labels = connected_components(mask, Connectivity::Eight);
    let areas = labels.areas();
    let (w, h) = mask.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        let id = labels.get(x, y);
        id > 0 && areas[&id] >= min_area
    })
    .expect("dims validated by input mask")
}

/// Builds tight instances from a label map, dropping those below
/// `min_area` (a watershed split can leave slivers under the limit).
fn instances_from_labels(labels: &LabelMap, min_area: usize) -> Vec<Instance> {
    let mut instances = Vec::new();
    for (id, bbox) in component_bboxes(labels) {
        let mask = BinaryMask::from_fn(bbox.width(), bbox.height(), |x, y| {
            labels.get(bbox.x0 + x, bbox.y0 + y) == id
        })
        .expect("bbox has positive extent");
        if mask.popcount() < min_area {
            continue;
        }
        instances.push(Instance {
            id: instances.len() as u32 + 1,
            bbox,
            mask,
            matched_point: None,
        });
    }
    instances
}
