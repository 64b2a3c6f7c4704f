//! Connected component labelling.

use super::{BinaryMask, LabelMap};

/// Pixel adjacency: edge neighbors only, or edges plus diagonals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    pub(crate) fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (0, -1),
                (1, -1),
                (-1, 0),
                (1, 0),
                (-1, 1),
                (0, 1),
                (1, 1),
            ],
        }
    }
}

/// Labels each maximal connected foreground region with a distinct id
/// `1..=K`, assigned in raster-scan order of the region's first pixel.
pub fn connected_components(mask: &BinaryMask, conn: Connectivity) -> LabelMap {
    let (w, h) = mask.dims();
    let mut labels = LabelMap::new(w, h).expect("mask dims already validated");
    let offsets = conn.offsets();
    let mut next_id = 0u32;
    let mut stack = Vec::new();

    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || labels.get(x, y) != 0 {
                continue;
            }
            next_id += 1;
            labels.set(x, y, next_id);
            stack.push((x, y));
            while let Some((cx, cy)) = stack.pop() {
                for &(dx, dy) in offsets {
                    let nx = cx as isize + dx;
                    let ny = cy as isize + dy;
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    if mask.get(nx, ny) && labels.get(nx, ny) == 0 {
                        labels.set(nx, ny, next_id);
                        stack.push((nx, ny));
                    }
                }
            }
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask_from(rows: &[&[u8]]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        BinaryMask::from_fn(w, h, |x, y| rows[y][x] != 0).unwrap()
    }

    #[test]
    fn all_background_gives_no_components() {
        let mask = BinaryMask::new(5, 4).unwrap();
        let labels = connected_components(&mask, Connectivity::Four);
        assert_eq!(labels.max_id(), 0);
        assert!(labels.ids().iter().all(|&id| id == 0));
    }

    #[test]
    fn diagonal_blobs_depend_on_connectivity() {
        let mask = mask_from(&[&[1, 0], &[0, 1]]);
        assert_eq!(connected_components(&mask, Connectivity::Four).max_id(), 2);
        assert_eq!(connected_components(&mask, Connectivity::Eight).max_id(), 1);
    }

    #[test]
    fn rectangles_labelled_in_scan_order() {
        // three disjoint rectangles; ids follow the top-left scan position
        let mut mask = BinaryMask::new(16, 10).unwrap();
        let rects = [(1usize, 1usize, 3usize, 3usize), (8, 2, 11, 5), (2, 6, 6, 9)];
        for &(x0, y0, x1, y1) in &rects {
            for y in y0..y1 {
                for x in x0..x1 {
                    mask.set(x, y, true);
                }
            }
        }
        let labels = connected_components(&mask, Connectivity::Four);
        assert_eq!(labels.max_id(), 3);
        assert_eq!(labels.get(1, 1), 1);
        assert_eq!(labels.get(8, 2), 2);
        assert_eq!(labels.get(2, 6), 3);

        // agreement with an independent flood fill per rectangle
        for (i, &(x0, y0, x1, y1)) in rects.iter().enumerate() {
            for y in y0..y1 {
                for x in x0..x1 {
                    assert_eq!(labels.get(x, y), i as u32 + 1);
                }
            }
        }
    }

    proptest! {
        // union of id pixel-sets = foreground, pairwise disjoint by construction
        #[test]
        fn components_partition_foreground(bits in proptest::collection::vec(any::<bool>(), 12 * 9)) {
            let mask = BinaryMask::from_fn(12, 9, |x, y| bits[y * 12 + x]).unwrap();
            for conn in [Connectivity::Four, Connectivity::Eight] {
                let labels = connected_components(&mask, conn);
                for y in 0..9 {
                    for x in 0..12 {
                        prop_assert_eq!(labels.get(x, y) > 0, mask.get(x, y));
                    }
                }
                // every id 1..=K is non-empty
                let areas = labels.areas();
                let k = labels.max_id();
                prop_assert_eq!(areas.len() as u32, k);
                for id in 1..=k {
                    prop_assert!(areas[&id] > 0);
                }
            }
        }
    }
}
