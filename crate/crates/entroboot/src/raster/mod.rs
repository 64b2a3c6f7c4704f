//! Core raster containers and the classical image operations the rest of
//! the pipeline builds on.
//!
//! All pixel containers are row-major with `(x, y)` addressing, `y * width + x`
//! indexing. Operations are pure functions over immutable inputs.

mod blur;
mod cc;
mod edt;
mod morph;

pub use blur::{gaussian_blur, gaussian_blur_windowed};
pub use cc::{connected_components, Connectivity};
pub use edt::distance_transform;
pub use morph::{dilate, erode, morph, open, MorphOp};
pub(crate) use morph::disk_offsets as morph_disk_offsets;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// H×W scalar raster: image intensity in `[0, 1]` or entropy in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    /// All-zero grid. Dimensions must both be at least 1.
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, 0.0)
    }

    /// Constant-valued grid.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![value; width * height],
        })
    }

    /// Wraps row-major data; length must equal `width * height`.
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::InvalidDimensions(format!(
                "data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds a grid by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Min-max normalization to `[0, 1]`. A constant grid maps to all zeros.
    /// Returns the normalized grid together with the original `(min, max)`.
    pub fn normalized(&self) -> (ImageGrid, f64, f64) {
        let (lo, hi) = self.min_max();
        let span = hi - lo;
        let data = if span > 0.0 {
            self.data.iter().map(|v| (v - lo) / span).collect()
        } else {
            vec![0.0; self.data.len()]
        };
        (
            ImageGrid {
                width: self.width,
                height: self.height,
                data,
            },
            lo,
            hi,
        )
    }

    /// Per-pixel map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageGrid {
        ImageGrid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// One boolean per pixel; `true` is foreground.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            bits: vec![false; width * height],
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        check_dims(width, height)?;
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// Thresholds a grid: foreground where `value >= t`.
    pub fn from_threshold(grid: &ImageGrid, t: f64) -> Self {
        Self {
            width: grid.width(),
            height: grid.height(),
            bits: grid.data().iter().map(|&v| v >= t).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Number of foreground pixels.
    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Pixelwise intersection count with another mask of the same dimensions.
    pub fn intersection_count(&self, other: &BinaryMask) -> usize {
        debug_assert_eq!(self.dims(), other.dims());
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count()
    }
}

/// H×W instance-id raster; 0 is background, positive ids are instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    ids: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            ids: vec![0; width * height],
        })
    }

    pub fn from_vec(width: usize, height: usize, ids: Vec<u32>) -> Result<Self> {
        check_dims(width, height)?;
        if ids.len() != width * height {
            return Err(Error::InvalidDimensions(format!(
                "ids length {} != {}x{}",
                ids.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, ids })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.ids[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, id: u32) {
        self.ids[y * self.width + x] = id;
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// Largest id present (0 for an all-background map).
    pub fn max_id(&self) -> u32 {
        self.ids.iter().copied().max().unwrap_or(0)
    }

    /// Foreground indicator (any positive id).
    pub fn foreground(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.ids.iter().map(|&id| id > 0).collect(),
        }
    }

    /// Indicator mask of a single id.
    pub fn mask_of(&self, id: u32) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.ids.iter().map(|&v| v == id).collect(),
        }
    }

    /// Pixel count per positive id, indexed by id.
    pub fn areas(&self) -> std::collections::BTreeMap<u32, usize> {
        let mut areas = std::collections::BTreeMap::new();
        for &id in &self.ids {
            if id > 0 {
                *areas.entry(id).or_insert(0) += 1;
            }
        }
        areas
    }

    /// Renumbers positive ids to `1..=K` with no gaps, ordered by the
    /// raster-scan position of each id's first pixel.
    pub fn compacted(&self) -> LabelMap {
        let mut remap = std::collections::HashMap::new();
        let mut next = 1u32;
        let mut ids = Vec::with_capacity(self.ids.len());
        for &id in &self.ids {
            if id == 0 {
                ids.push(0);
            } else {
                let new = *remap.entry(id).or_insert_with(|| {
                    let v = next;
                    next += 1;
                    v
                });
                ids.push(new);
            }
        }
        LabelMap {
            width: self.width,
            height: self.height,
            ids,
        }
    }
}

/// Axis-aligned pixel box, `x0/y0` inclusive, `x1/y1` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::InvalidDimensions(format!(
                "degenerate bbox ({x0},{y0},{x1},{y1})"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Pixel overlap with another box.
    pub fn intersection_area(&self, other: &BBox) -> usize {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1.min(other.x1);
        let y1 = self.y1.min(other.y1);
        if x0 < x1 && y0 < y1 {
            (x1 - x0) * (y1 - y0)
        } else {
            0
        }
    }

    /// Grows the box by `margin` pixels on every side, clipped to the image.
    pub fn dilated(&self, margin: usize, width: usize, height: usize) -> BBox {
        BBox {
            x0: self.x0.saturating_sub(margin),
            y0: self.y0.saturating_sub(margin),
            x1: (self.x1 + margin).min(width),
            y1: (self.y1 + margin).min(height),
        }
    }
}

/// Tight bounding box of each positive id, in ascending id order.
pub fn component_bboxes(labels: &LabelMap) -> Vec<(u32, BBox)> {
    let mut extents: std::collections::BTreeMap<u32, (usize, usize, usize, usize)> =
        std::collections::BTreeMap::new();
    for y in 0..labels.height() {
        for x in 0..labels.width() {
            let id = labels.get(x, y);
            if id == 0 {
                continue;
            }
            let e = extents.entry(id).or_insert((x, y, x, y));
            e.0 = e.0.min(x);
            e.1 = e.1.min(y);
            e.2 = e.2.max(x);
            e.3 = e.3.max(y);
        }
    }
    extents
        .into_iter()
        .map(|(id, (x0, y0, x1, y1))| {
            (
                id,
                BBox {
                    x0,
                    y0,
                    x1: x1 + 1,
                    y1: y1 + 1,
                },
            )
        })
        .collect()
}

/// Mirror-reflect an index into `[0, n)` (boundary pixel not repeated).
/// Used by every reflect-border operation in the crate.
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    debug_assert!(n >= 1);
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions(format!(
            "dimensions must be at least 1x1, got {width}x{height}"
        )));
    }
    Ok(())
}
