//! Separable Gaussian blur with reflected borders.

use super::{reflect_index, ImageGrid};
use crate::error::{Error, Result};

/// Gaussian blur with kernel truncated at radius `ceil(3*sigma)`.
///
/// Borders are mirror-reflected, so a constant image stays constant and
/// total mass is preserved for signals that do not touch the border.
pub fn gaussian_blur(grid: &ImageGrid, sigma: f64) -> Result<ImageGrid> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    let radius = (3.0 * sigma).ceil() as usize;
    gaussian_blur_windowed(grid, sigma, radius)
}

/// Gaussian blur with an explicit truncation radius.
///
/// Adaptive thresholding uses this to pin the kernel support to its
/// window instead of the default `3*sigma` cutoff.
pub fn gaussian_blur_windowed(grid: &ImageGrid, sigma: f64, radius: usize) -> Result<ImageGrid> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    if !grid.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    let kernel = normalized_kernel(sigma, radius);
    let (w, h) = grid.dims();

    // Horizontal pass
    let mut tmp = vec![0.0f64; w * h];
    for y in 0..h {
        let row = &grid.data()[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &wt) in kernel.iter().enumerate() {
                let dx = k as isize - radius as isize;
                acc += wt * row[reflect_index(x as isize + dx, w)];
            }
            tmp[y * w + x] = acc;
        }
    }

    // Vertical pass
    let mut out = vec![0.0f64; w * h];
    for x in 0..w {
        for y in 0..h {
            let mut acc = 0.0;
            for (k, &wt) in kernel.iter().enumerate() {
                let dy = k as isize - radius as isize;
                acc += wt * tmp[reflect_index(y as isize + dy, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }

    ImageGrid::from_vec(w, h, out)
}

fn normalized_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let mut kernel: Vec<f64> = (0..=2 * radius)
        .map(|k| {
            let d = k as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= sum;
    }
    kernel
}
