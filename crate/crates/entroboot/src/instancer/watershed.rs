//! Marker-controlled watershed within a region of interest.

use std::collections::BinaryHeap;

use crate::instancer::InstancerConfig;
use crate::raster::{
    connected_components, distance_transform, BBox, BinaryMask, Connectivity, ImageGrid, LabelMap,
};

/// Splits the masked pixels of one ROI into instances.
///
/// Markers are the connected components of the distance-transform peaks
/// (at least `marker_dt_fraction` of the per-ROI maximum). A priority
/// flood grows them outward across mask pixels, visiting deeper pixels
/// first and breaking ties on the smoothed image value, so the split
/// lands in the valley between two peaks. Mask components the markers
/// never reach become one instance each.
///
/// Returns an ROI-sized label map; every mask pixel inside the ROI
/// carries exactly one positive label.
pub fn watershed_roi(
    image_smoothed: &ImageGrid,
    mask: &BinaryMask,
    roi: &BBox,
    config: &InstancerConfig,
) -> LabelMap {
    let (rw, rh) = (roi.width(), roi.height());
    let submask = BinaryMask::from_fn(rw, rh, |x, y| mask.get(roi.x0 + x, roi.y0 + y))
        .expect("roi validated against mask dims");
    let mut labels = LabelMap::new(rw, rh).expect("roi has positive extent");
    if submask.is_empty() {
        return labels;
    }

    let dt = distance_transform(&submask);
    let (_, dt_max) = dt.min_max();
    let threshold = config.marker_dt_fraction * dt_max;
    let marker_mask = BinaryMask::from_fn(rw, rh, |x, y| {
        submask.get(x, y) && dt.get(x, y) >= threshold
    })
    .expect("roi has positive extent");
    let markers = connected_components(&marker_mask, Connectivity::Eight);

    // Priority flood: deepest pixels first, smoothed image value as
    // tiebreak, then insertion order for full determinism.
    let mut heap: BinaryHeap<FloodEntry> = BinaryHeap::new();
    let mut seq = 0u64;
    for y in 0..rh {
        for x in 0..rw {
            let m = markers.get(x, y);
            if m > 0 {
                labels.set(x, y, m);
                heap.push(FloodEntry {
                    depth: dt.get(x, y),
                    tie: image_smoothed.get(roi.x0 + x, roi.y0 + y),
                    seq,
                    x,
                    y,
                });
                seq += 1;
            }
        }
    }

    while let Some(entry) = heap.pop() {
        let label = labels.get(entry.x, entry.y);
        for &(dx, dy) in Connectivity::Eight.offsets() {
            let nx = entry.x as isize + dx;
            let ny = entry.y as isize + dy;
            if nx < 0 || ny < 0 || nx >= rw as isize || ny >= rh as isize {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            if submask.get(nx, ny) && labels.get(nx, ny) == 0 {
                labels.set(nx, ny, label);
                heap.push(FloodEntry {
                    depth: dt.get(nx, ny),
                    tie: image_smoothed.get(roi.x0 + nx, roi.y0 + ny),
                    seq,
                    x: nx,
                    y: ny,
                });
                seq += 1;
            }
        }
    }

    // Components the flood never reached (their peaks sat below the
    // per-ROI threshold) become one instance each.
    let base = markers.max_id();
    let unreached = BinaryMask::from_fn(rw, rh, |x, y| submask.get(x, y) && labels.get(x, y) == 0)
        .expect("roi has positive extent");
    if !unreached.is_empty() {
        let extra = connected_components(&unreached, Connectivity::Eight);
        for y in 0..rh {
            for x in 0..rw {
                let id = extra.get(x, y);
                if id > 0 {
                    labels.set(x, y, base + id);
                }
            }
        }
    }
    labels
}

/// Flood queue entry ordered so the heap pops the deepest pixel first,
/// then the lowest smoothed image value, then insertion order.
#[derive(PartialEq)]
struct FloodEntry {
    depth: f64,
    tie: f64,
    seq: u64,
    x: usize,
    y: usize,
}

impl Eq for FloodEntry {}

impl Ord for FloodEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.depth
            .total_cmp(&other.depth)
            .then(other.tie.total_cmp(&self.tie))
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for FloodEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_roi(mask: &BinaryMask) -> BBox {
        BBox::new(0, 0, mask.width(), mask.height()).unwrap()
    }

    #[test]
    fn convex_blob_is_one_instance() {
        let mask = BinaryMask::from_fn(20, 20, |x, y| {
            let dx = x as f64 - 10.0;
            let dy = y as f64 - 10.0;
            dx * dx + dy * dy <= 36.0
        })
        .unwrap();
        let image = ImageGrid::new(20, 20).unwrap();
        let labels = watershed_roi(&image, &mask, &full_roi(&mask), &InstancerConfig::default());
        assert_eq!(labels.max_id(), 1);
        for y in 0..20 {
            for x in 0..20 {
                assert_eq!(labels.get(x, y) > 0, mask.get(x, y));
            }
        }
    }

    #[test]
    fn neck_between_disks_splits() {
        // two radius-5 disks joined by a 1-pixel-wide neck: the distance
        // transform peaks in each disk, so two markers emerge and the
        // split lands at the neck
        let mask = BinaryMask::from_fn(36, 16, |x, y| {
            let d1 = {
                let dx = x as f64 - 8.0;
                let dy = y as f64 - 8.0;
                dx * dx + dy * dy <= 25.0
            };
            let d2 = {
                let dx = x as f64 - 27.0;
                let dy = y as f64 - 8.0;
                dx * dx + dy * dy <= 25.0
            };
            let neck = y == 8 && (8..=27).contains(&x);
            d1 || d2 || neck
        })
        .unwrap();
        // distance-transform maxima oracle: the two disk centers are the
        // only pixels at the maximal depth
        let dt = distance_transform(&mask);
        let (_, peak) = dt.min_max();
        let peaks: Vec<(usize, usize)> = (0..16)
            .flat_map(|y| (0..36).map(move |x| (x, y)))
            .filter(|&(x, y)| dt.get(x, y) == peak)
            .collect();
        assert_eq!(peaks, vec![(8, 8), (27, 8)]);

        let image = ImageGrid::new(36, 16).unwrap();
        let labels = watershed_roi(&image, &mask, &full_roi(&mask), &InstancerConfig::default());
        assert_eq!(labels.max_id(), 2);
        assert_ne!(labels.get(8, 8), labels.get(27, 8));
        // the neck belongs to exactly one side; the far disk pixels agree
        // with their center
        assert_eq!(labels.get(5, 8), labels.get(8, 8));
        assert_eq!(labels.get(30, 8), labels.get(27, 8));
    }

    #[test]
    fn labels_partition_mask() {
        let mask = BinaryMask::from_fn(24, 18, |x, y| (x / 5 + y / 4) % 2 == 0).unwrap();
        let image = ImageGrid::from_fn(24, 18, |x, y| ((x * 7 + y * 13) % 11) as f64 / 10.0)
            .unwrap();
        let labels = watershed_roi(&image, &mask, &full_roi(&mask), &InstancerConfig::default());
        for y in 0..18 {
            for x in 0..24 {
                assert_eq!(labels.get(x, y) > 0, mask.get(x, y), "at ({x},{y})");
            }
        }
    }

    #[test]
    fn degenerate_component_without_marker_survives() {
        // tiny satellite blob next to a large one: its depth never reaches
        // half the ROI maximum, so it gets no marker but must still come
        // out as one instance
        let mask = BinaryMask::from_fn(30, 14, |x, y| {
            let big = {
                let dx = x as f64 - 9.0;
                let dy = y as f64 - 7.0;
                dx * dx + dy * dy <= 30.0
            };
            let tiny = x == 25 && y == 7;
            big || tiny
        })
        .unwrap();
        let image = ImageGrid::new(30, 14).unwrap();
        let labels = watershed_roi(&image, &mask, &full_roi(&mask), &InstancerConfig::default());
        assert_eq!(labels.max_id(), 2);
        assert!(labels.get(25, 7) > 0);
        assert_ne!(labels.get(25, 7), labels.get(9, 7));
    }
}
