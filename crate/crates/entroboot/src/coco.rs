//! COCO-style instance JSON: the interchange format for detected
//! instances and externally scored predictions.
//!
//! Masks travel as uncompressed RLE in column-major (Fortran) order,
//! counts alternating runs of background and foreground starting with
//! background, under `{"size": [height, width], "counts": [...]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instancer::{Instance, InstanceSet};
use crate::metrics::{GtInstance, ScoredPrediction};
use crate::raster::{BBox, BinaryMask};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoDataset {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub width: usize,
    pub height: usize,
    pub file_name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u32,
    pub name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    /// `[x, y, width, height]`
    pub bbox: [f64; 4],
    pub area: f64,
    #[serde(default)]
    pub iscrowd: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<CocoRle>,
    /// Present only for scored (external) predictions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// Uncompressed column-major RLE.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoRle {
    /// `[height, width]`
    pub size: [usize; 2],
    pub counts: Vec<usize>,
}

/// Encodes a full-image mask as column-major RLE.
pub fn rle_encode(mask: &BinaryMask) -> CocoRle {
    let (w, h) = mask.dims();
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0usize;
    for x in 0..w {
        for y in 0..h {
            if mask.get(x, y) == current {
                run += 1;
            } else {
                counts.push(run);
                current = !current;
                run = 1;
            }
        }
    }
    counts.push(run);
    CocoRle {
        size: [h, w],
        counts,
    }
}

/// Decodes column-major RLE back to a mask.
pub fn rle_decode(rle: &CocoRle) -> Result<BinaryMask> {
    let [h, w] = rle.size;
    let total: usize = rle.counts.iter().sum();
    if total != w * h {
        return Err(Error::InvalidParameter(format!(
            "RLE counts sum to {total}, expected {w}x{h}"
        )));
    }
    let mut mask = BinaryMask::new(w, h)?;
    let mut idx = 0usize;
    let mut value = false;
    for &run in &rle.counts {
        if value {
            for k in idx..idx + run {
                mask.set(k / h, k % h, true);
            }
        }
        idx += run;
        value = !value;
    }
    Ok(mask)
}

/// Paints a tight instance mask into full-image coordinates.
fn full_mask(inst: &Instance, width: usize, height: usize) -> Result<BinaryMask> {
    let mut mask = BinaryMask::new(width, height)?;
    for y in inst.bbox.y0..inst.bbox.y1 {
        for x in inst.bbox.x0..inst.bbox.x1 {
            if inst.mask.get(x - inst.bbox.x0, y - inst.bbox.y0) {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}

pub const NUCLEUS_CATEGORY: u32 = 1;

/// Builds a COCO dataset from per-image instance sets. Watershed
/// instances carry no score. Annotation ids are assigned sequentially
/// across the whole dataset.
pub fn export_instances(sets: &[(String, &InstanceSet)]) -> Result<CocoDataset> {
    let mut images = Vec::with_capacity(sets.len());
    let mut annotations = Vec::new();
    let mut next_ann = 1u64;
    for (i, (name, set)) in sets.iter().enumerate() {
        let image_id = i as u64 + 1;
        images.push(CocoImage {
            id: image_id,
            width: set.width,
            height: set.height,
            file_name: name.clone(),
        });
        for inst in &set.instances {
            let mask = full_mask(inst, set.width, set.height)?;
            annotations.push(CocoAnnotation {
                id: next_ann,
                image_id,
                category_id: NUCLEUS_CATEGORY,
                bbox: [
                    inst.bbox.x0 as f64,
                    inst.bbox.y0 as f64,
                    inst.bbox.width() as f64,
                    inst.bbox.height() as f64,
                ],
                area: inst.area() as f64,
                iscrowd: 0,
                segmentation: Some(rle_encode(&mask)),
                score: None,
            });
            next_ann += 1;
        }
    }
    Ok(CocoDataset {
        images,
        annotations,
        categories: vec![CocoCategory {
            id: NUCLEUS_CATEGORY,
            name: "nucleus".into(),
        }],
    })
}

pub fn save_dataset(path: impl AsRef<Path>, dataset: &CocoDataset) -> Result<()> {
    crate::io::write_json(path, dataset)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<CocoDataset> {
    let text = std::fs::read_to_string(path.as_ref())?;
    Ok(serde_json::from_str(&text)?)
}

fn annotation_bbox(ann: &CocoAnnotation, width: usize, height: usize) -> Result<BBox> {
    let x0 = ann.bbox[0].max(0.0).floor() as usize;
    let y0 = ann.bbox[1].max(0.0).floor() as usize;
    let x1 = ((ann.bbox[0] + ann.bbox[2]).ceil() as usize).min(width);
    let y1 = ((ann.bbox[1] + ann.bbox[3]).ceil() as usize).min(height);
    BBox::new(x0, y0, x1, y1)
}

/// Crops a full-image RLE mask to a tight mask within `bbox`.
fn tight_mask(full: &BinaryMask, bbox: &BBox) -> Result<BinaryMask> {
    BinaryMask::from_fn(bbox.width(), bbox.height(), |x, y| {
        full.get(bbox.x0 + x, bbox.y0 + y)
    })
}

/// Reads one image's annotations as scored predictions. Annotations
/// without a score default to 1.0 (rank by input order).
pub fn predictions_for_image(
    dataset: &CocoDataset,
    image_id: u64,
) -> Result<Vec<ScoredPrediction>> {
    let image = dataset
        .images
        .iter()
        .find(|im| im.id == image_id)
        .ok_or_else(|| Error::InvalidParameter(format!("image id {image_id} not in dataset")))?;
    let mut preds = Vec::new();
    for ann in dataset.annotations.iter().filter(|a| a.image_id == image_id) {
        let bbox = annotation_bbox(ann, image.width, image.height)?;
        let mask = match &ann.segmentation {
            Some(rle) => Some(tight_mask(&rle_decode(rle)?, &bbox)?),
            None => None,
        };
        preds.push(ScoredPrediction {
            bbox,
            mask,
            score: ann.score.unwrap_or(1.0),
        });
    }
    Ok(preds)
}

/// Reads one image's annotations as an unscored instance set, for the
/// detection-rate path.
pub fn instances_for_image(dataset: &CocoDataset, image_id: u64) -> Result<InstanceSet> {
    let image = dataset
        .images
        .iter()
        .find(|im| im.id == image_id)
        .ok_or_else(|| Error::InvalidParameter(format!("image id {image_id} not in dataset")))?;
    let mut instances = Vec::new();
    for ann in dataset.annotations.iter().filter(|a| a.image_id == image_id) {
        let bbox = annotation_bbox(ann, image.width, image.height)?;
        let mask = match &ann.segmentation {
            Some(rle) => tight_mask(&rle_decode(rle)?, &bbox)?,
            None => BinaryMask::from_fn(bbox.width(), bbox.height(), |_, _| true)?,
        };
        instances.push(Instance {
            id: instances.len() as u32 + 1,
            bbox,
            mask,
            matched_point: None,
        });
    }
    Ok(InstanceSet {
        width: image.width,
        height: image.height,
        instances,
    })
}

/// Reads one image's annotations as ground-truth instances.
pub fn gt_for_image(dataset: &CocoDataset, image_id: u64) -> Result<Vec<GtInstance>> {
    let set = instances_for_image(dataset, image_id)?;
    Ok(set
        .instances
        .into_iter()
        .map(|inst| GtInstance {
            id: inst.id,
            bbox: inst.bbox,
            mask: inst.mask,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rle_known_pattern() {
        // column-major: (x=0,y=0..2) then x=1 ...
        let mut mask = BinaryMask::new(3, 2).unwrap();
        mask.set(0, 0, true);
        mask.set(0, 1, true);
        mask.set(2, 1, true);
        let rle = rle_encode(&mask);
        assert_eq!(rle.size, [2, 3]);
        assert_eq!(rle.counts, vec![0, 2, 3, 1]);
        assert_eq!(rle_decode(&rle).unwrap(), mask);
    }

    #[test]
    fn rle_empty_and_full() {
        let empty = BinaryMask::new(4, 3).unwrap();
        let rle = rle_encode(&empty);
        assert_eq!(rle.counts, vec![12]);
        let full = BinaryMask::from_fn(4, 3, |_, _| true).unwrap();
        let rle = rle_encode(&full);
        assert_eq!(rle.counts, vec![0, 12]);
        assert_eq!(rle_decode(&rle).unwrap(), full);
    }

    #[test]
    fn rle_rejects_bad_counts() {
        let rle = CocoRle {
            size: [3, 3],
            counts: vec![4, 4],
        };
        assert!(rle_decode(&rle).is_err());
    }

    proptest! {
        #[test]
        fn rle_roundtrip(bits in proptest::collection::vec(any::<bool>(), 9 * 7)) {
            let mask = BinaryMask::from_fn(9, 7, |x, y| bits[y * 9 + x]).unwrap();
            let rle = rle_encode(&mask);
            prop_assert_eq!(rle_decode(&rle).unwrap(), mask);
            // counts alternate and sum to the pixel count
            prop_assert_eq!(rle.counts.iter().sum::<usize>(), 63);
        }
    }

    #[test]
    fn export_empty_set_is_valid() {
        let set = InstanceSet {
            width: 32,
            height: 32,
            instances: vec![],
        };
        let ds = export_instances(&[("img.png".into(), &set)]).unwrap();
        assert_eq!(ds.images.len(), 1);
        assert!(ds.annotations.is_empty());
        assert_eq!(ds.categories[0].name, "nucleus");
        // serializes and parses back
        let text = serde_json::to_string(&ds).unwrap();
        let back: CocoDataset = serde_json::from_str(&text).unwrap();
        assert_eq!(back.images[0].width, 32);
    }

    #[test]
    fn export_roundtrips_instances() {
        let mut mask = BinaryMask::new(5, 4).unwrap();
        for y in 0..4 {
            for x in 0..5 {
                if x + y < 5 {
                    mask.set(x, y, true);
                }
            }
        }
        let inst = Instance {
            id: 1,
            bbox: BBox::new(3, 2, 8, 6).unwrap(),
            mask: mask.clone(),
            matched_point: Some(0),
        };
        let set = InstanceSet {
            width: 16,
            height: 12,
            instances: vec![inst.clone()],
        };
        let ds = export_instances(&[("a.png".into(), &set)]).unwrap();
        let ann = &ds.annotations[0];
        assert_eq!(ann.bbox, [3.0, 2.0, 5.0, 4.0]);
        assert_eq!(ann.area, mask.popcount() as f64);
        assert_eq!(ann.score, None);

        let back = instances_for_image(&ds, 1).unwrap();
        assert_eq!(back.instances.len(), 1);
        assert_eq!(back.instances[0].bbox, inst.bbox);
        assert_eq!(back.instances[0].mask, inst.mask);

        let preds = predictions_for_image(&ds, 1).unwrap();
        assert_eq!(preds[0].score, 1.0);
        assert_eq!(preds[0].mask.as_ref().unwrap(), &inst.mask);
    }
}
