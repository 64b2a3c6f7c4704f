//! File formats: grayscale PNG/PGM rasters, label maps with JSON
//! sidecars, point annotation JSON and entropy map metadata.
//!
//! Grid values live in `[0, 1]` in memory as f64 and are quantized to
//! 16 bits on disk.

use std::collections::BTreeMap;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{component_bboxes, ImageGrid, LabelMap};
use crate::sparsify::PointAnnotation;

/// Reads an 8/16-bit grayscale PNG or a PGM (P2/P5), normalized to `[0, 1]`.
pub fn load_image_grid(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let img = image::open(path.as_ref())?;
    let grid = match img {
        DynamicImage::ImageLuma8(buf) => grid_from_luma8(&buf),
        DynamicImage::ImageLuma16(buf) => grid_from_luma16(&buf),
        // PNGs with an alpha channel or palette decode to other variants;
        // collapse them to 16-bit gray rather than reject.
        other => grid_from_luma16(&other.into_luma16()),
    }?;
    Ok(grid)
}

/// Writes a grid as 16-bit grayscale PNG; values clamped to `[0, 1]`.
pub fn save_image_grid(path: impl AsRef<Path>, grid: &ImageGrid) -> Result<()> {
    let (w, h) = grid.dims();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let v = grid.get(x as usize, y as usize).clamp(0.0, 1.0);
        Luma([(v * 65535.0).round() as u16])
    });
    buf.save(path.as_ref())?;
    Ok(())
}

/// Sidecar metadata stored next to a label PNG.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelSidecar {
    pub width: usize,
    pub height: usize,
    /// id -> [x0, y0, x1, y1] with exclusive upper bounds
    pub bboxes: BTreeMap<u32, [usize; 4]>,
}

/// Writes a label map as a 16-bit id PNG plus a JSON sidecar of bboxes.
pub fn save_label_map(
    png_path: impl AsRef<Path>,
    json_path: impl AsRef<Path>,
    labels: &LabelMap,
) -> Result<()> {
    let max = labels.max_id();
    if max > u16::MAX as u32 {
        return Err(Error::InvalidParameter(format!(
            "label map has {max} ids; 16-bit PNG holds at most {}",
            u16::MAX
        )));
    }
    let (w, h) = labels.dims();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        Luma([labels.get(x as usize, y as usize) as u16])
    });
    buf.save(png_path.as_ref())?;

    let sidecar = LabelSidecar {
        width: w,
        height: h,
        bboxes: component_bboxes(labels)
            .into_iter()
            .map(|(id, b)| (id, [b.x0, b.y0, b.x1, b.y1]))
            .collect(),
    };
    write_json(json_path, &sidecar)
}

/// Reads a label map from a 16-bit (or 8-bit) id PNG.
pub fn load_label_map(png_path: impl AsRef<Path>) -> Result<LabelMap> {
    let img = image::open(png_path.as_ref())?;
    let (buf, w, h) = match img {
        DynamicImage::ImageLuma8(b) => {
            let (w, h) = b.dimensions();
            (b.pixels().map(|p| p[0] as u32).collect::<Vec<_>>(), w, h)
        }
        DynamicImage::ImageLuma16(b) => {
            let (w, h) = b.dimensions();
            (b.pixels().map(|p| p[0] as u32).collect::<Vec<_>>(), w, h)
        }
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "label PNG must be grayscale, got {other:?}"
            )))
        }
    };
    LabelMap::from_vec(w as usize, h as usize, buf)
}

/// Entropy/probability map metadata: the pre-normalization value range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridMeta {
    pub width: usize,
    pub height: usize,
    pub min: f64,
    pub max: f64,
}

/// Writes a non-negative map as normalized 16-bit PNG plus the
/// normalization constants needed to recover absolute values.
pub fn save_grid_normalized(
    png_path: impl AsRef<Path>,
    json_path: impl AsRef<Path>,
    grid: &ImageGrid,
) -> Result<()> {
    let (norm, min, max) = grid.normalized();
    save_image_grid(png_path, &norm)?;
    let (width, height) = grid.dims();
    write_json(
        json_path,
        &GridMeta {
            width,
            height,
            min,
            max,
        },
    )
}

pub fn save_points(path: impl AsRef<Path>, points: &[PointAnnotation]) -> Result<()> {
    write_json(path, &points)
}

pub fn load_points(path: impl AsRef<Path>) -> Result<Vec<PointAnnotation>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    Ok(serde_json::from_str(&text)?)
}

pub(crate) fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path.as_ref(), text + "\n")?;
    Ok(())
}

fn grid_from_luma8(buf: &ImageBuffer<Luma<u8>, Vec<u8>>) -> Result<ImageGrid> {
    let (w, h) = buf.dimensions();
    ImageGrid::from_vec(
        w as usize,
        h as usize,
        buf.pixels().map(|p| p[0] as f64 / 255.0).collect(),
    )
}

fn grid_from_luma16(buf: &ImageBuffer<Luma<u16>, Vec<u16>>) -> Result<ImageGrid> {
    let (w, h) = buf.dimensions();
    ImageGrid::from_vec(
        w as usize,
        h as usize,
        buf.pixels().map(|p| p[0] as f64 / 65535.0).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip_quantizes_to_16_bits() {
        let dir = tempdir();
        let path = dir.join("grid.png");
        let grid = ImageGrid::from_fn(17, 9, |x, y| (x as f64 * 0.05 + y as f64 * 0.01).min(1.0))
            .unwrap();
        save_image_grid(&path, &grid).unwrap();
        let back = load_image_grid(&path).unwrap();
        assert_eq!(back.dims(), (17, 9));
        for y in 0..9 {
            for x in 0..17 {
                assert!((back.get(x, y) - grid.get(x, y)).abs() <= 0.5 / 65535.0 + 1e-12);
            }
        }
    }

    #[test]
    fn pgm_p2_and_p5_load() {
        let dir = tempdir();
        let p2 = dir.join("a.pgm");
        std::fs::write(&p2, b"P2\n3 2\n255\n0 128 255\n255 128 0\n").unwrap();
        let g = load_image_grid(&p2).unwrap();
        assert_eq!(g.dims(), (3, 2));
        assert_eq!(g.get(0, 0), 0.0);
        assert_eq!(g.get(2, 0), 1.0);
        assert!((g.get(1, 0) - 128.0 / 255.0).abs() < 1e-12);

        let p5 = dir.join("b.pgm");
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 64, 192]);
        std::fs::write(&p5, bytes).unwrap();
        let g = load_image_grid(&p5).unwrap();
        assert_eq!(g.get(1, 0), 1.0);
        assert!((g.get(0, 1) - 64.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn label_map_roundtrip_with_sidecar() {
        let dir = tempdir();
        let png = dir.join("labels.png");
        let json = dir.join("labels.json");
        let mut labels = LabelMap::new(8, 6).unwrap();
        for y in 1..4 {
            for x in 2..5 {
                labels.set(x, y, 3);
            }
        }
        labels.set(7, 5, 1);
        save_label_map(&png, &json, &labels).unwrap();
        let back = load_label_map(&png).unwrap();
        assert_eq!(back, labels);
        let sidecar: LabelSidecar =
            serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
        assert_eq!(sidecar.bboxes[&3], [2, 1, 5, 4]);
        assert_eq!(sidecar.bboxes[&1], [7, 5, 8, 6]);
    }

    fn tempdir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "entroboot-io-test-{}-{:?}",
            std::process::id(),
            std::thread::current().id()
        ));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }
}
