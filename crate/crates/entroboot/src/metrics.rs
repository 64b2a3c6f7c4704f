//! Evaluation: Dice curves, ROC/AUROC, IoU, detection rate and
//! COCO-style average precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instancer::InstanceSet;
use crate::raster::{component_bboxes, BBox, BinaryMask, ImageGrid, LabelMap};

/// Sampled curve: strictly increasing abscissa, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCurve {
    pub samples: Vec<(f64, f64)>,
}

/// Detection outcome at one IoU threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub alpha: f64,
    pub tp: usize,
    pub n_gt: usize,
    pub rate: f64,
}

/// A score-ranked external prediction, bbox plus optional mask.
#[derive(Debug, Clone)]
pub struct ScoredPrediction {
    pub bbox: BBox,
    /// Tight mask of `bbox` dimensions, when available.
    pub mask: Option<BinaryMask>,
    pub score: f64,
}

/// Whether instances are compared by bounding box or by mask pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    Bbox,
    Mask,
}

/// Dice coefficient `2|A∩B| / (|A| + |B|)`. Two empty masks agree
/// perfectly and score 1.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(format!(
            "dice: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let pa = a.popcount();
    let pb = b.popcount();
    if pa + pb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * a.intersection_count(b) as f64 / (pa + pb) as f64)
}

/// Mask IoU `|A∩B| / |A∪B|`; errors when both masks are empty.
pub fn iou_mask(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(format!(
            "iou: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let inter = a.intersection_count(b);
    let union = a.popcount() + b.popcount() - inter;
    if union == 0 {
        return Err(Error::EmptyIou);
    }
    Ok(inter as f64 / union as f64)
}

/// Bounding-box IoU. Boxes are non-empty by construction.
pub fn iou_bbox(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Dice of the thresholded map against a ground-truth mask, swept over
/// `n_thresholds` evenly spaced cuts of `[0, 1]`. Returns the curve and
/// its peak `(threshold, dice)`, ties resolved to the lowest threshold.
///
/// The map is thresholded as `value >= t`, so expect it normalized.
pub fn dice_curve(
    entropy: &ImageGrid,
    gt: &BinaryMask,
    n_thresholds: usize,
) -> Result<(MetricCurve, (f64, f64))> {
    if entropy.dims() != gt.dims() {
        return Err(Error::DimensionMismatch(format!(
            "dice_curve: {:?} vs {:?}",
            entropy.dims(),
            gt.dims()
        )));
    }
    if n_thresholds < 2 {
        return Err(Error::InvalidParameter("need at least 2 thresholds".into()));
    }
    let mut samples = Vec::with_capacity(n_thresholds);
    let mut peak = (0.0, -1.0);
    for i in 0..n_thresholds {
        let t = i as f64 / (n_thresholds - 1) as f64;
        let mask = BinaryMask::from_threshold(entropy, t);
        let d = dice(&mask, gt)?;
        if d > peak.1 {
            peak = (t, d);
        }
        samples.push((t, d));
    }
    Ok((MetricCurve { samples }, peak))
}

/// ROC curve and AUROC of the map as a foreground score.
///
/// Pixels are swept from the highest score down; tied scores move as one
/// group, which makes the trapezoidal area equal to the Mann-Whitney
/// rank statistic with half-credit ties. The curve is reported as
/// `(FPR, TPR)` vertices with strictly increasing FPR.
pub fn roc_auroc(entropy: &ImageGrid, gt: &BinaryMask) -> Result<(MetricCurve, f64)> {
    if entropy.dims() != gt.dims() {
        return Err(Error::DimensionMismatch(format!(
            "roc: {:?} vs {:?}",
            entropy.dims(),
            gt.dims()
        )));
    }
    let n_pos = gt.popcount();
    let n = gt.bits().len();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::AurocUndefined);
    }

    let mut scored: Vec<(f64, bool)> = entropy
        .data()
        .iter()
        .copied()
        .zip(gt.bits().iter().copied())
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut auroc = 0.0;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut points = vec![(0.0, 0.0)];
    let mut i = 0usize;
    while i < n {
        let mut j = i;
        let mut tie_pos = 0usize;
        let mut tie_neg = 0usize;
        while j < n && scored[j].0 == scored[i].0 {
            if scored[j].1 {
                tie_pos += 1;
            } else {
                tie_neg += 1;
            }
            j += 1;
        }
        let prev_tpr = tp as f64 / n_pos as f64;
        tp += tie_pos;
        fp += tie_neg;
        let tpr = tp as f64 / n_pos as f64;
        let fpr = fp as f64 / n_neg as f64;
        // trapezoid over the tie group
        auroc += (tie_neg as f64 / n_neg as f64) * (prev_tpr + tpr) / 2.0;
        points.push((fpr, tpr));
        i = j;
    }

    // keep vertices with strictly increasing FPR (max TPR per FPR)
    let mut samples: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for (fpr, tpr) in points {
        match samples.last_mut() {
            Some(last) if last.0 == fpr => last.1 = last.1.max(tpr),
            _ => samples.push((fpr, tpr)),
        }
    }
    Ok((MetricCurve { samples }, auroc))
}

/// Ground-truth instances extracted from a label map, for detection and
/// AP evaluation.
#[derive(Debug, Clone)]
pub struct GtInstance {
    pub id: u32,
    pub bbox: BBox,
    /// Tight mask of `bbox` dimensions.
    pub mask: BinaryMask,
}

pub fn gt_instances(gt: &LabelMap) -> Vec<GtInstance> {
    component_bboxes(gt)
        .into_iter()
        .map(|(id, bbox)| {
            let mask = BinaryMask::from_fn(bbox.width(), bbox.height(), |x, y| {
                gt.get(bbox.x0 + x, bbox.y0 + y) == id
            })
            .expect("bbox has positive extent");
            GtInstance { id, bbox, mask }
        })
        .collect()
}

fn mask_iou_in_bbox(
    a_bbox: &BBox,
    a_mask: &BinaryMask,
    b_bbox: &BBox,
    b_mask: &BinaryMask,
) -> f64 {
    let x0 = a_bbox.x0.max(b_bbox.x0);
    let y0 = a_bbox.y0.max(b_bbox.y0);
    let x1 = a_bbox.x1.min(b_bbox.x1);
    let y1 = a_bbox.y1.min(b_bbox.y1);
    let mut inter = 0usize;
    if x0 < x1 && y0 < y1 {
        for y in y0..y1 {
            for x in x0..x1 {
                if a_mask.get(x - a_bbox.x0, y - a_bbox.y0)
                    && b_mask.get(x - b_bbox.x0, y - b_bbox.y0)
                {
                    inter += 1;
                }
            }
        }
    }
    let union = a_mask.popcount() + b_mask.popcount() - inter;
    if union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

/// Detection rate at one IoU threshold: predictions and ground truth are
/// matched one-to-one greedily in descending bbox IoU; a prediction is a
/// true positive when its match reaches `alpha`.
pub fn detection_rate(preds: &InstanceSet, gt: &LabelMap, alpha: f64) -> Result<DetectionReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha {alpha} must be in (0, 1)"
        )));
    }
    let gts = gt_instances(gt);
    if gts.is_empty() {
        return Err(Error::NoNuclei);
    }

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, pred) in preds.instances.iter().enumerate() {
        for (gi, g) in gts.iter().enumerate() {
            let iou = iou_bbox(&pred.bbox, &g.bbox);
            if iou >= alpha {
                pairs.push((iou, pi, gi));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut pred_taken = vec![false; preds.instances.len()];
    let mut gt_taken = vec![false; gts.len()];
    let mut tp = 0usize;
    for (_, pi, gi) in pairs {
        if pred_taken[pi] || gt_taken[gi] {
            continue;
        }
        pred_taken[pi] = true;
        gt_taken[gi] = true;
        tp += 1;
    }
    Ok(DetectionReport {
        alpha,
        tp,
        n_gt: gts.len(),
        rate: tp as f64 / gts.len() as f64,
    })
}

/// The default detection sweep, 0.25 to 0.75 in steps of 0.05.
pub fn default_detection_alphas() -> Vec<f64> {
    (0..=10).map(|i| 0.25 + 0.05 * i as f64).collect()
}

/// Detection rate over a sweep of IoU thresholds.
pub fn detection_curve(
    preds: &InstanceSet,
    gt: &LabelMap,
    alphas: &[f64],
) -> Result<MetricCurve> {
    let mut samples = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let r = detection_rate(preds, gt, alpha)?;
        samples.push((alpha, r.rate));
    }
    Ok(MetricCurve { samples })
}

/// COCO-style average precision with 101-point interpolation.
///
/// Predictions are ranked by descending score (input order on ties),
/// each greedily matched to the best unclaimed ground truth at IoU >=
/// `alpha`. The precision-recall curve is then sampled on the recall
/// grid `0, 0.01, ..., 1` with the running-max precision.
pub fn average_precision(
    preds: &[ScoredPrediction],
    gts: &[GtInstance],
    alpha: f64,
    mode: MatchMode,
) -> Result<f64> {
    if gts.is_empty() {
        return Err(Error::NoNuclei);
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score).then(a.cmp(&b)));

    let mut gt_taken = vec![false; gts.len()];
    let mut tp_flags = Vec::with_capacity(preds.len());
    for &pi in &order {
        let p = &preds[pi];
        let mut best = (0.0f64, None::<usize>);
        for (gi, g) in gts.iter().enumerate() {
            if gt_taken[gi] {
                continue;
            }
            let iou = match (mode, &p.mask) {
                (MatchMode::Mask, Some(mask)) => mask_iou_in_bbox(&p.bbox, mask, &g.bbox, &g.mask),
                _ => iou_bbox(&p.bbox, &g.bbox),
            };
            if iou >= alpha && iou > best.0 {
                best = (iou, Some(gi));
            }
        }
        match best.1 {
            Some(gi) => {
                gt_taken[gi] = true;
                tp_flags.push(true);
            }
            None => tp_flags.push(false),
        }
    }

    // precision/recall after each prediction
    let mut pr: Vec<(f64, f64)> = Vec::with_capacity(tp_flags.len());
    let mut tp = 0usize;
    for (k, &is_tp) in tp_flags.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        let precision = tp as f64 / (k + 1) as f64;
        let recall = tp as f64 / gts.len() as f64;
        pr.push((recall, precision));
    }

    // 101-point interpolation: precision at r = max precision at recall >= r
    let mut ap = 0.0;
    for i in 0..=100 {
        let r = i as f64 / 100.0;
        let p = pr
            .iter()
            .filter(|&&(recall, _)| recall >= r - 1e-12)
            .map(|&(_, precision)| precision)
            .fold(0.0, f64::max);
        ap += p;
    }
    Ok(ap / 101.0)
}

/// The three headline AP numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapScores {
    pub map50: f64,
    pub map75: f64,
    /// Mean AP over IoU thresholds 0.50 to 0.95 in steps of 0.05.
    pub map: f64,
}

/// AP at 0.50 and 0.75 plus the 0.50:0.05:0.95 mean, for one image.
pub fn map_suite(
    preds: &[ScoredPrediction],
    gts: &[GtInstance],
    mode: MatchMode,
) -> Result<MapScores> {
    let map50 = average_precision(preds, gts, 0.50, mode)?;
    let map75 = average_precision(preds, gts, 0.75, mode)?;
    let mut total = 0.0;
    for i in 0..10 {
        let alpha = 0.50 + 0.05 * i as f64;
        total += average_precision(preds, gts, alpha, mode)?;
    }
    Ok(MapScores {
        map50,
        map75,
        map: total / 10.0,
    })
}
