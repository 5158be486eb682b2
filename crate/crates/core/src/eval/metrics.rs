use crate::error::{Error, Result};
use crate::grid::{BinaryMask, ProbMap};
use crate::morphology::squared_distance_to;
use crate::skeleton::skeletonize;

/// Smoothing added to numerator and denominator of the soft Dice score.
pub const SOFT_DICE_EPS: f64 = 1e-6;

fn same_shape(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("shape mismatch: {a:?} vs {b:?}")));
    }
    Ok(())
}

fn overlap(a: &BinaryMask, b: &BinaryMask) -> usize {
    a.data()
        .iter()
        .zip(b.data())
        .filter(|(&x, &y)| x && y)
        .count()
}

/// `2|P & G| / (|P| + |G|)`, 1 when both are empty.
pub fn dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    same_shape(pred.shape(), gt.shape())?;
    let total = pred.count() + gt.count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * overlap(pred, gt) as f64 / total as f64)
}

/// Dice on probabilities: `(2 sum(p g) + eps) / (sum p + sum g + eps)`.
pub fn soft_dice(pred: &ProbMap, gt: &BinaryMask) -> Result<f64> {
    same_shape(pred.shape(), gt.shape())?;
    let (mut inter, mut sum_p, mut sum_g) = (0.0, 0.0, 0.0);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        sum_p += p;
        if g {
            inter += p;
            sum_g += 1.0;
        }
    }
    Ok((2.0 * inter + SOFT_DICE_EPS) / (sum_p + sum_g + SOFT_DICE_EPS))
}

/// `(TP / (TP + FP), TP / (TP + FN))`. An empty prediction has precision 1
/// and an empty ground truth has recall 1.
pub fn precision_recall(pred: &BinaryMask, gt: &BinaryMask) -> Result<(f64, f64)> {
    same_shape(pred.shape(), gt.shape())?;
    let tp = overlap(pred, gt) as f64;
    let (np, ng) = (pred.count(), gt.count());
    let precision = if np == 0 { 1.0 } else { tp / np as f64 };
    let recall = if ng == 0 { 1.0 } else { tp / ng as f64 };
    Ok((precision, recall))
}

/// Nearest-rank percentile of the distances from `from` pixels to `to`.
fn directed(from: &BinaryMask, to: &BinaryMask, percentile: f64) -> f64 {
    let d2 = squared_distance_to(to);
    let mut values: Vec<f64> = from
        .data()
        .iter()
        .zip(d2.data())
        .filter(|(&m, _)| m)
        .map(|(_, &d)| d)
        .collect();
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let rank = ((percentile / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    values[rank - 1].sqrt()
}

/// Symmetric Hausdorff distance in pixels at `percentile` (100 is the
/// classical maximum): the larger of the two directed percentiles.
pub fn hausdorff(pred: &BinaryMask, gt: &BinaryMask, percentile: f64) -> Result<f64> {
    same_shape(pred.shape(), gt.shape())?;
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::invalid(format!(
            "percentile {percentile} outside (0, 100]"
        )));
    }
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::UndefinedMetric(
            "Hausdorff distance of an empty mask".into(),
        ));
    }
    Ok(directed(pred, gt, percentile).max(directed(gt, pred, percentile)))
}

/// Centreline Dice: harmonic mean of the fraction of the predicted skeleton
/// inside the ground truth and of the ground-truth skeleton inside the
/// prediction.
pub fn cl_dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    same_shape(pred.shape(), gt.shape())?;
    let (sp, sg) = (skeletonize(pred), skeletonize(gt));
    match (sp.is_empty(), sg.is_empty()) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let tprec = overlap(&sp, gt) as f64 / sp.count() as f64;
    let tsens = overlap(&sg, pred) as f64 / sg.count() as f64;
    if tprec + tsens == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * tprec * tsens / (tprec + tsens))
}
