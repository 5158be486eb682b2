//! Sampled 1D Gaussian and Gaussian-derivative kernels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Derivative order of a Gaussian kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DerivativeOrder {
    Smooth,
    First,
    Second,
}

impl TryFrom<u8> for DerivativeOrder {
    type Error = Error;

    fn try_from(order: u8) -> Result<Self> {
        match order {
            0 => Ok(Self::Smooth),
            1 => Ok(Self::First),
            2 => Ok(Self::Second),
            n => Err(Error::invalid(format!(
                "derivative order {n} not in {{0, 1, 2}}"
            ))),
        }
    }
}

/// Odd-length 1D kernel; `taps[j + radius]` is the weight at offset `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel1D {
    radius: usize,
    taps: Vec<f64>,
}

impl Kernel1D {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.len().is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "kernel length {} must be odd",
                taps.len()
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("kernel taps must be finite"));
        }
        Ok(Self {
            radius: taps.len() / 2,
            taps,
        })
    }

    /// `[0, 1, 0]`.
    pub fn identity() -> Self {
        Self {
            radius: 1,
            taps: vec![0.0, 1.0, 0.0],
        }
    }

    #[inline]
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Weight at signed offset `j`; zero outside the support.
    pub fn at(&self, j: isize) -> f64 {
        let idx = j + self.radius as isize;
        if idx < 0 || idx as usize >= self.taps.len() {
            0.0
        } else {
            self.taps[idx as usize]
        }
    }

    /// Iterates `(offset, weight)` from `-radius` to `radius`.
    pub fn offsets(&self) -> impl Iterator<Item = (isize, f64)> + '_ {
        let r = self.radius as isize;
        self.taps
            .iter()
            .enumerate()
            .map(move |(i, &w)| (i as isize - r, w))
    }
}

/// Samples the Gaussian of standard deviation `sigma` (or its first/second
/// derivative) on integer offsets in `[-ceil(4 sigma), ceil(4 sigma)]`.
///
/// Truncation and sampling distort the low-order moments, so the taps are
/// corrected to keep the discrete derivative exact on low-degree polynomials:
/// the smoothing kernel sums to 1; the first-derivative kernel sums to 0 and
/// maps `x` to 1; the second-derivative kernel is mean-corrected to sum 0 and
/// then scaled so that it maps `x^2` to 2.
pub fn gaussian_kernel(sigma: f64, order: DerivativeOrder) -> Result<Kernel1D> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::invalid(format!(
            "sigma must be positive and finite, got {sigma}"
        )));
    }
    let radius = (4.0 * sigma).ceil() as usize;
    let var = sigma * sigma;
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let offsets = -(radius as isize)..=(radius as isize);
    let g = |x: f64| norm * (-x * x / (2.0 * var)).exp();

    let mut taps: Vec<f64> = match order {
        DerivativeOrder::Smooth => offsets.map(|j| g(j as f64)).collect(),
        DerivativeOrder::First => offsets
            .map(|j| {
                let x = j as f64;
                -x / var * g(x)
            })
            .collect(),
        DerivativeOrder::Second => offsets
            .map(|j| {
                let x = j as f64;
                (x * x / (var * var) - 1.0 / var) * g(x)
            })
            .collect(),
    };

    let r = radius as isize;
    match order {
        DerivativeOrder::Smooth => {
            let sum: f64 = taps.iter().sum();
            taps.iter_mut().for_each(|t| *t /= sum);
        }
        DerivativeOrder::First => {
            // Antisymmetric by construction; (f * k)(x) = sum_j k_j f(x - j),
            // so f(x) = x gives -sum_j j k_j.
            let moment: f64 = taps
                .iter()
                .enumerate()
                .map(|(i, t)| -((i as isize - r) as f64) * t)
                .sum();
            taps.iter_mut().for_each(|t| *t /= moment);
            // Exact zero at the center and exact antisymmetry.
            taps[radius] = 0.0;
            for i in 0..radius {
                let v = 0.5 * (taps[i] - taps[2 * radius - i]);
                taps[i] = v;
                taps[2 * radius - i] = -v;
            }
        }
        DerivativeOrder::Second => {
            let mean = taps.iter().sum::<f64>() / taps.len() as f64;
            taps.iter_mut().for_each(|t| *t -= mean);
            let moment: f64 = taps
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let x = (i as isize - r) as f64;
                    x * x * t
                })
                .sum();
            taps.iter_mut().for_each(|t| *t *= 2.0 / moment);
        }
    }
    Ok(Kernel1D { radius, taps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(1.0, DerivativeOrder::Smooth).unwrap();
        assert_eq!(k.radius(), 4);
        assert!((k.taps().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for j in 1..=4 {
            assert_eq!(k.at(j), k.at(-j));
            assert!(k.at(0) > k.at(j));
        }
    }

    #[test]
    fn first_derivative_is_antisymmetric() {
        let k = gaussian_kernel(1.0, DerivativeOrder::First).unwrap();
        assert_eq!(k.at(0), 0.0);
        for j in 1..=4 {
            assert_eq!(k.at(j), -k.at(-j));
        }
        assert!(k.taps().iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn derivative_kernels_sum_to_zero() {
        for &sigma in &[0.3, 0.7, 1.0, 2.5, 6.0] {
            for order in [DerivativeOrder::First, DerivativeOrder::Second] {
                let k = gaussian_kernel(sigma, order).unwrap();
                assert!(
                    k.taps().iter().sum::<f64>().abs() < 1e-9,
                    "{sigma} {order:?}"
                );
            }
            let k = gaussian_kernel(sigma, DerivativeOrder::Smooth).unwrap();
            assert!((k.taps().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(k.radius(), (4.0 * sigma).ceil() as usize);
        }
    }

    #[test]
    fn rejects_bad_sigma() {
        for s in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(gaussian_kernel(s, DerivativeOrder::Smooth).is_err());
        }
        assert!(DerivativeOrder::try_from(3).is_err());
    }

    #[test]
    fn kernel_new_requires_odd_length() {
        assert!(Kernel1D::new(vec![1.0, 2.0]).is_err());
        assert_eq!(Kernel1D::new(vec![0.25, 0.5, 0.25]).unwrap().radius(), 1);
    }
}
