//! Binary morphology with a Euclidean disk structuring element.

use super::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphOp {
    Erode,
    Dilate,
}

/// Lattice disk offsets `{(dx, dy) : dx^2 + dy^2 <= r^2}`.
pub(crate) fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let r2 = r * r;
    let mut offsets = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r2 {
                offsets.push((dx, dy));
            }
        }
    }
    offsets
}

/// Erosion or dilation by a disk of the given radius.
///
/// Pixels outside the image are background: erosion strips the frame,
/// dilation clips at it.
pub fn morph(mask: &BinaryMask, op: MorphOp, radius: usize) -> BinaryMask {
    assert!(radius >= 1, "structuring element radius must be >= 1");
    let offsets = disk_offsets(radius);
    let (w, h) = mask.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        match op {
            MorphOp::Erode => offsets.iter().all(|&(dx, dy)| {
                let nx = x as isize + dx;
                let ny = y as isize + dy;
                nx >= 0
                    && ny >= 0
                    && nx < w as isize
                    && ny < h as isize
                    && mask.get(nx as usize, ny as usize)
            }),
            MorphOp::Dilate => offsets.iter().any(|&(dx, dy)| {
                let nx = x as isize + dx;
                let ny = y as isize + dy;
                nx >= 0
                    && ny >= 0
                    && nx < w as isize
                    && ny < h as isize
                    && mask.get(nx as usize, ny as usize)
            }),
        }
    })
    .expect("dims validated by input mask")
}

pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    morph(mask, MorphOp::Erode, radius)
}

pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    morph(mask, MorphOp::Dilate, radius)
}

/// Morphological opening: erosion then dilation with the same disk.
pub fn open(mask: &BinaryMask, radius: usize) -> BinaryMask {
    dilate(&erode(mask, radius), radius)
}
