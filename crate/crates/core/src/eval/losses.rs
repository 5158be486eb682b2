use serde::{Deserialize, Serialize};

use super::metrics::soft_dice;
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Image, ProbMap};

const PROB_CLIP: f64 = 1e-7;

/// Weighted binary cross-entropy averaged over pixels, probabilities clipped
/// to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(pred: &ProbMap, gt: &BinaryMask, pos_weight: f64) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return Err(Error::invalid(format!(
            "shape mismatch: {:?} vs {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    if !(pos_weight.is_finite() && pos_weight > 0.0) {
        return Err(Error::invalid(format!(
            "pos-weight must be > 0, got {pos_weight}"
        )));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| {
            let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            if g {
                -pos_weight * p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// `1 - soft_dice`.
pub fn dice_loss(pred: &ProbMap, gt: &BinaryMask) -> Result<f64> {
    Ok(1.0 - soft_dice(pred, gt)?)
}

/// One-hot class codes for real-tube, clean and synthetic images.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassTargets {
    a: [f64; 3],
    b: [f64; 3],
    c: [f64; 3],
}

impl Default for ClassTargets {
    fn default() -> Self {
        Self {
            a: [1.0, 0.0, 0.0],
            b: [0.0, 1.0, 0.0],
            c: [0.0, 0.0, 1.0],
        }
    }
}

impl ClassTargets {
    pub fn new(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> Result<Self> {
        let hot = |v: &[f64; 3]| -> Option<usize> {
            let ones: Vec<usize> = (0..3).filter(|&i| v[i] == 1.0).collect();
            let zeros = v.iter().filter(|&&x| x == 0.0).count();
            (ones.len() == 1 && zeros == 2).then(|| ones[0])
        };
        match (hot(&a), hot(&b), hot(&c)) {
            (Some(i), Some(j), Some(k)) if i != j && j != k && i != k => Ok(Self { a, b, c }),
            _ => Err(Error::invalid(
                "class targets must be three distinct one-hot vectors",
            )),
        }
    }

    pub fn real(&self) -> [f64; 3] {
        self.a
    }

    pub fn clean(&self) -> [f64; 3] {
        self.b
    }

    pub fn synthetic(&self) -> [f64; 3] {
        self.c
    }
}

/// Squared error averaged over components and batch.
fn mse(outputs: &[[f64; 3]], target: &[f64; 3], what: &str) -> Result<f64> {
    if outputs.is_empty() {
        return Err(Error::invalid(format!("{what} batch is empty")));
    }
    let sum: f64 = outputs
        .iter()
        .flat_map(|o| o.iter().zip(target).map(|(x, t)| (x - t).powi(2)))
        .sum();
    Ok(sum / (3 * outputs.len()) as f64)
}

/// Least-squares adversarial losses with three classes. Returns
/// `(discriminator, generator)`.
pub fn lsgan_losses(
    d_real: &[[f64; 3]],
    d_clean: &[[f64; 3]],
    d_synth: &[[f64; 3]],
    targets: &ClassTargets,
) -> Result<(f64, f64)> {
    let loss_d = (mse(d_real, &targets.a, "real")?
        + mse(d_clean, &targets.b, "clean")?
        + mse(d_synth, &targets.c, "synthetic")?)
        / 3.0;
    let loss_g = mse(d_synth, &targets.a, "synthetic")? / 3.0;
    Ok((loss_d, loss_g))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegLoss {
    #[serde(rename = "bce")]
    Bce,
    #[serde(rename = "dice")]
    Dice,
    #[default]
    #[serde(rename = "bce+dice")]
    BceDice,
}

/// L1 reconstruction error plus a segmentation loss on the predicted mask.
pub fn cycle_loss(
    reconstructed: &Image,
    original: &Image,
    pred_mask: &ProbMap,
    mask: &BinaryMask,
    seg: SegLoss,
) -> Result<f64> {
    if reconstructed.shape() != original.shape() {
        return Err(Error::invalid(format!(
            "shape mismatch: {:?} vs {:?}",
            reconstructed.shape(),
            original.shape()
        )));
    }
    let l1 = reconstructed
        .data()
        .iter()
        .zip(original.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / original.len() as f64;
    let seg_term = match seg {
        SegLoss::Bce => bce_loss(pred_mask, mask, 1.0)?,
        SegLoss::Dice => dice_loss(pred_mask, mask)?,
        SegLoss::BceDice => bce_loss(pred_mask, mask, 1.0)? + dice_loss(pred_mask, mask)?,
    };
    Ok(l1 + seg_term)
}

/// Classical two-player objective: mean `log D(x)` over real samples plus
/// mean `log(1 - D(G(z)))` over generated ones.
pub fn minimax_value(d_on_real: &[f64], d_on_fake: &[f64]) -> Result<f64> {
    if d_on_real.is_empty() || d_on_fake.is_empty() {
        return Err(Error::invalid("minimax value needs non-empty batches"));
    }
    if let Some(v) = d_on_real
        .iter()
        .chain(d_on_fake)
        .find(|v| !(**v > 0.0 && **v < 1.0))
    {
        return Err(Error::invalid(format!(
            "discriminator output {v} outside (0, 1)"
        )));
    }
    let real = d_on_real.iter().map(|d| d.ln()).sum::<f64>() / d_on_real.len() as f64;
    let fake = d_on_fake.iter().map(|d| (1.0 - d).ln()).sum::<f64>() / d_on_fake.len() as f64;
    Ok(real + fake)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::f64::consts::{E, LN_2};

    fn tube_mask() -> BinaryMask {
        BinaryMask::from_fn(8, 8, |r, _| (3..5).contains(&r))
    }

    fn as_prob(m: &BinaryMask) -> ProbMap {
        Image::from_grid(m.to_grid()).unwrap()
    }

    #[test]
    fn bce_examples() {
        let g = tube_mask();
        assert!(bce_loss(&as_prob(&g), &g, 1.0).unwrap() <= 1e-6);
        let half = Image::filled(8, 8, 0.5).unwrap();
        assert!((bce_loss(&half, &g, 1.0).unwrap() - LN_2).abs() < 1e-12);
        let weighted = bce_loss(&half, &g, 3.0).unwrap();
        assert!((weighted - LN_2 * (16.0 * 3.0 + 48.0) / 64.0).abs() < 1e-12);
        let wrong = Image::from_grid(Grid::from_fn(8, 8, |r, _| {
            if (3..5).contains(&r) {
                0.0
            } else {
                1.0
            }
        }))
        .unwrap();
        assert!(bce_loss(&wrong, &g, 1.0).unwrap().is_finite());
        assert!(bce_loss(&half, &g, 0.0).is_err());
    }

    #[test]
    fn dice_loss_of_perfect_prediction() {
        let g = tube_mask();
        assert!(dice_loss(&as_prob(&g), &g).unwrap() <= 1e-6);
    }

    #[test]
    fn lsgan_examples() {
        let t = ClassTargets::default();
        let (d, _) = lsgan_losses(&[t.real()], &[t.clean()], &[t.synthetic()], &t).unwrap();
        assert_eq!(d, 0.0);
        let (_, g) = lsgan_losses(&[t.real()], &[t.clean()], &[t.real()], &t).unwrap();
        assert_eq!(g, 0.0);
        let (d, _) = lsgan_losses(&[t.clean()], &[t.clean()], &[t.synthetic()], &t).unwrap();
        assert!((d - 2.0 / 9.0).abs() < 1e-15);
        assert!(lsgan_losses(&[], &[t.clean()], &[t.synthetic()], &t).is_err());
    }

    #[test]
    fn class_target_validation() {
        assert!(ClassTargets::new([1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]).is_err());
        assert!(ClassTargets::new([0.5, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]).is_err());
        let t = ClassTargets::new([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]).unwrap();
        assert_eq!(t.real(), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn cycle_examples() {
        let g = tube_mask();
        let orig = Image::filled(8, 8, 0.4).unwrap();
        let perfect = cycle_loss(&orig, &orig, &as_prob(&g), &g, SegLoss::BceDice).unwrap();
        assert!(perfect <= 1e-6);
        let shifted = Image::filled(8, 8, 0.5).unwrap();
        let l = cycle_loss(&shifted, &orig, &as_prob(&g), &g, SegLoss::Bce).unwrap();
        assert!((l - 0.1).abs() < 1e-6);
        let half = Image::filled(8, 8, 0.5).unwrap();
        let vague = cycle_loss(&orig, &orig, &half, &g, SegLoss::Dice).unwrap();
        let sharp = cycle_loss(&orig, &orig, &as_prob(&g), &g, SegLoss::Dice).unwrap();
        assert!(vague > sharp);
        assert!(cycle_loss(
            &orig,
            &Image::filled(8, 7, 0.4).unwrap(),
            &half,
            &g,
            SegLoss::Dice
        )
        .is_err());
    }

    #[test]
    fn minimax_examples() {
        assert!((minimax_value(&[0.5], &[0.5]).unwrap() + 2.0 * LN_2).abs() < 1e-15);
        assert!((minimax_value(&[1.0 / E], &[1.0 - 1.0 / E]).unwrap() + 2.0).abs() < 1e-12);
        let near = minimax_value(&[1.0 - 1e-12], &[1e-12]).unwrap();
        assert!(near < 0.0 && near > -1e-9);
        assert!(minimax_value(&[1.0], &[0.5]).is_err());
        assert!(minimax_value(&[0.5], &[0.0]).is_err());
    }
}
