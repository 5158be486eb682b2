//! Manual tube renderers: an additive blurred mask, and a hand-drawn style
//! profile with darkened borders, a bright centreline, a smooth random warp
//! and intensity-dependent blending.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conv::gaussian_blur;
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Grid, Image};
use crate::morphology::{inner_boundary, squared_distance_to};
use crate::rng::RngStream;
use crate::skeleton::skeletonize;

/// Support of a Gaussian blur, in multiples of sigma.
const SUPPORT: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SmoothedMaskParams {
    /// Signed intensity added at full mask coverage.
    pub amplitude: f64,
    pub blur_sigma: f64,
}

impl Default for SmoothedMaskParams {
    fn default() -> Self {
        Self {
            amplitude: 0.15,
            blur_sigma: 1.5,
        }
    }
}

impl SmoothedMaskParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.blur_sigma.is_finite() && self.blur_sigma > 0.0) {
            return Err(Error::invalid(format!(
                "blur-sigma must be > 0, got {}",
                self.blur_sigma
            )));
        }
        if !(self.amplitude.is_finite() && self.amplitude.abs() <= 1.0) {
            return Err(Error::invalid(format!(
                "amplitude must lie in [-1, 1], got {}",
                self.amplitude
            )));
        }
        Ok(())
    }
}

/// Appearance of a hand-drawn tube. Gains are intensity deltas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct HandDrawnStyle {
    pub profile_blur_sigma: f64,
    /// Added over the whole tube body.
    pub body_gain: f64,
    /// Subtracted on the one-pixel inner border.
    pub border_gain: f64,
    /// Added on the skeleton.
    pub centerline_gain: f64,
    pub distortion_amplitude: f64,
    pub distortion_wavelength: f64,
    /// Fraction by which the addition shrinks at a background of intensity 1.
    pub local_intensity_gain: f64,
}

impl Default for HandDrawnStyle {
    fn default() -> Self {
        Self {
            profile_blur_sigma: 1.0,
            body_gain: 0.12,
            border_gain: 0.2,
            centerline_gain: 0.08,
            distortion_amplitude: 2.0,
            distortion_wavelength: 64.0,
            local_intensity_gain: 0.5,
        }
    }
}

impl HandDrawnStyle {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.profile_blur_sigma,
            self.body_gain,
            self.border_gain,
            self.centerline_gain,
            self.distortion_amplitude,
            self.distortion_wavelength,
            self.local_intensity_gain,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("hand-drawn parameters must be finite"));
        }
        if self.profile_blur_sigma <= 0.0 {
            return Err(Error::invalid("profile-blur-sigma must be > 0"));
        }
        if self.border_gain < 0.0 {
            return Err(Error::invalid("border-gain must be >= 0"));
        }
        if self.distortion_amplitude < 0.0 {
            return Err(Error::invalid("distortion-amplitude must be >= 0"));
        }
        if self.distortion_wavelength <= 0.0 {
            return Err(Error::invalid("distortion-wavelength must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.local_intensity_gain) {
            return Err(Error::invalid("local-intensity-gain must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct HandDrawnParams {
    pub style: HandDrawnStyle,
    pub rng: RngStream,
}

fn check_shapes(cxr: &Image, mask: &BinaryMask) -> Result<()> {
    if cxr.shape() != mask.shape() {
        return Err(Error::invalid(format!(
            "image is {:?} but mask is {:?}",
            cxr.shape(),
            mask.shape()
        )));
    }
    Ok(())
}

/// Zeroes `field` wherever the distance to the mask exceeds `reach`.
fn truncate(field: &mut Grid, mask: &BinaryMask, reach: f64) {
    let d2 = squared_distance_to(mask);
    let limit = reach * reach;
    for (v, d) in field.data_mut().iter_mut().zip(d2.data()) {
        if *d > limit {
            *v = 0.0;
        }
    }
}

/// `clamp(cxr + amplitude * blur(mask), 0, 1)`; pixels farther than four
/// sigmas from the mask are left untouched.
pub fn render_smoothed_mask(
    cxr: &Image,
    mask: &BinaryMask,
    p: &SmoothedMaskParams,
) -> Result<Image> {
    p.validate()?;
    check_shapes(cxr, mask)?;
    if mask.is_empty() || p.amplitude == 0.0 {
        return Ok(cxr.clone());
    }
    let mut field = gaussian_blur(&mask.to_grid(), p.blur_sigma)?;
    truncate(&mut field, mask, SUPPORT * p.blur_sigma);
    let out = Grid::from_fn(cxr.height(), cxr.width(), |r, c| {
        cxr.get(r, c) + p.amplitude * field.get(r, c)
    });
    Ok(Image::from_grid_clamped(out))
}

/// Bilinear sample with coordinates clamped to the grid.
fn bilinear(g: &Grid, row: f64, col: f64) -> f64 {
    let (h, w) = g.shape();
    let row = row.clamp(0.0, (h - 1) as f64);
    let col = col.clamp(0.0, (w - 1) as f64);
    let (r0, c0) = (row.floor() as usize, col.floor() as usize);
    let (r1, c1) = ((r0 + 1).min(h - 1), (c0 + 1).min(w - 1));
    let (fr, fc) = (row - r0 as f64, col - c0 as f64);
    let top = g.get(r0, c0) * (1.0 - fc) + g.get(r0, c1) * fc;
    let bottom = g.get(r1, c0) * (1.0 - fc) + g.get(r1, c1) * fc;
    top * (1.0 - fr) + bottom * fr
}

/// Shears `field` by a sinusoidal displacement of random amplitude, direction
/// and phase.
fn warp(field: &Grid, amplitude: f64, wavelength: f64, rng: &mut RngStream) -> Grid {
    let a = rng.random_range(0.0..=amplitude);
    let theta = rng.random_range(0.0..TAU);
    let phase = rng.random_range(0.0..TAU);
    let (dx, dy) = (theta.cos(), theta.sin());
    Grid::from_fn(field.height(), field.width(), |r, c| {
        let s = -(c as f64) * dy + r as f64 * dx;
        let m = a * (TAU * s / wavelength + phase).sin();
        bilinear(field, r as f64 - m * dy, c as f64 - m * dx)
    })
}

/// Hand-drawn style tube: blurred body minus a darker border plus a brighter
/// centreline, warped, then added with weight `1 - gain * cxr`.
pub fn render_hand_drawn(cxr: &Image, mask: &BinaryMask, p: &HandDrawnParams) -> Result<Image> {
    let s = &p.style;
    s.validate()?;
    check_shapes(cxr, mask)?;
    if mask.is_empty() {
        return Err(Error::invalid(
            "hand-drawn rendering needs a non-empty mask",
        ));
    }
    let (h, w) = cxr.shape();
    let border = inner_boundary(mask);
    let centre = skeletonize(mask);
    let profile = Grid::from_fn(h, w, |r, c| {
        let mut v = 0.0;
        if mask.get(r, c) {
            v += s.body_gain;
        }
        if border.get(r, c) {
            v -= s.border_gain;
        }
        if centre.get(r, c) {
            v += s.centerline_gain;
        }
        v
    });
    let mut field = gaussian_blur(&profile, s.profile_blur_sigma)?;
    truncate(&mut field, mask, SUPPORT * s.profile_blur_sigma);
    if s.distortion_amplitude > 0.0 {
        let mut rng = p.rng.clone();
        field = warp(
            &field,
            s.distortion_amplitude,
            s.distortion_wavelength,
            &mut rng,
        );
        truncate(
            &mut field,
            mask,
            SUPPORT * s.profile_blur_sigma + s.distortion_amplitude,
        );
    }
    let out = Grid::from_fn(h, w, |r, c| {
        let x = cxr.get(r, c);
        x + field.get(r, c) * (1.0 - s.local_intensity_gain * x)
    });
    Ok(Image::from_grid_clamped(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{gaussian_kernel, DerivativeOrder};

    fn tube(h: usize, w: usize, rows: std::ops::Range<usize>) -> BinaryMask {
        BinaryMask::from_fn(h, w, |r, c| rows.contains(&r) && (8..w - 8).contains(&c))
    }

    fn hand(style: HandDrawnStyle) -> HandDrawnParams {
        HandDrawnParams {
            style,
            rng: RngStream::new(5, 0),
        }
    }

    #[test]
    fn smoothed_null_cases() {
        let cxr = Image::from_grid(Grid::from_fn(20, 30, |r, c| {
            ((r * 7 + c) % 11) as f64 / 10.0
        }))
        .unwrap();
        let mask = tube(20, 30, 9..12);
        let zero = SmoothedMaskParams {
            amplitude: 0.0,
            blur_sigma: 1.5,
        };
        assert_eq!(render_smoothed_mask(&cxr, &mask, &zero).unwrap(), cxr);
        let p = SmoothedMaskParams::default();
        assert_eq!(
            render_smoothed_mask(&cxr, &BinaryMask::empty(20, 30), &p).unwrap(),
            cxr
        );
        assert!(render_smoothed_mask(&cxr, &BinaryMask::empty(20, 31), &p).is_err());
    }

    #[test]
    fn smoothed_centreline_matches_dense_blur() {
        let (h, w) = (32, 48);
        let cxr = Image::filled(h, w, 0.2).unwrap();
        let mask = tube(h, w, 14..19);
        let p = SmoothedMaskParams {
            amplitude: 0.3,
            blur_sigma: 1.5,
        };
        let out = render_smoothed_mask(&cxr, &mask, &p).unwrap();

        // Direct 2D sum over the outer-product kernel, away from the borders.
        let k = gaussian_kernel(1.5, DerivativeOrder::Smooth).unwrap();
        let rad = k.radius() as isize;
        let (r0, c0) = (16isize, 24isize);
        let mut peak = 0.0;
        for dy in -rad..=rad {
            for dx in -rad..=rad {
                if mask.get((r0 - dy) as usize, (c0 - dx) as usize) {
                    peak += k.at(dy) * k.at(dx);
                }
            }
        }
        assert!((out.get(16, 24) - (0.2 + 0.3 * peak)).abs() < 1e-12);
    }

    #[test]
    fn smoothed_is_local_and_monotone() {
        let (h, w) = (40, 40);
        let cxr = Image::filled(h, w, 0.5).unwrap();
        let mask = tube(h, w, 18..21);
        let d = squared_distance_to(&mask);
        let mut last = 0.0;
        for amp in [0.05, 0.2, 0.6, 1.0] {
            let p = SmoothedMaskParams {
                amplitude: amp,
                blur_sigma: 2.0,
            };
            let out = render_smoothed_mask(&cxr, &mask, &p).unwrap();
            let mut max = 0.0f64;
            for i in 0..h * w {
                let diff = (out.data()[i] - cxr.data()[i]).abs();
                if d.data()[i] > 64.0 {
                    assert_eq!(diff, 0.0);
                }
                max = max.max(diff);
            }
            assert!(max >= last);
            last = max;
        }
    }

    #[test]
    fn hand_drawn_null_pipeline() {
        let cxr = Image::from_grid(Grid::from_fn(24, 40, |r, c| {
            0.1 + 0.02 * ((r + c) % 9) as f64
        }))
        .unwrap();
        let mask = tube(24, 40, 10..15);
        let style = HandDrawnStyle {
            body_gain: 0.0,
            border_gain: 0.0,
            centerline_gain: 0.0,
            distortion_amplitude: 0.0,
            ..HandDrawnStyle::default()
        };
        assert_eq!(render_hand_drawn(&cxr, &mask, &hand(style)).unwrap(), cxr);
        assert!(render_hand_drawn(&cxr, &BinaryMask::empty(24, 40), &hand(style)).is_err());
    }

    #[test]
    fn hand_drawn_deterministic_and_local() {
        let (h, w) = (48, 64);
        let cxr = Image::filled(h, w, 0.4).unwrap();
        let mask = tube(h, w, 20..27);
        let p = hand(HandDrawnStyle::default());
        let a = render_hand_drawn(&cxr, &mask, &p).unwrap();
        let b = render_hand_drawn(&cxr, &mask, &p).unwrap();
        assert_eq!(a, b);
        let reach = 4.0 * p.style.profile_blur_sigma + p.style.distortion_amplitude;
        let d = squared_distance_to(&mask);
        for i in 0..h * w {
            if d.data()[i] > reach * reach {
                assert_eq!(a.data()[i], cxr.data()[i]);
            }
        }
    }

    #[test]
    fn profile_has_three_extrema() {
        let (h, w) = (40, 64);
        let cxr = Image::filled(h, w, 0.3).unwrap();
        let mask = tube(h, w, 17..24);
        let style = HandDrawnStyle {
            distortion_amplitude: 0.0,
            ..HandDrawnStyle::default()
        };
        let out = render_hand_drawn(&cxr, &mask, &hand(style)).unwrap();
        let profile: Vec<f64> = (0..h).map(|r| out.get(r, 32)).collect();
        let mut extrema = Vec::new();
        let mut prev_slope = 0.0f64;
        for r in 1..h {
            let slope = profile[r] - profile[r - 1];
            if slope.abs() < 1e-12 {
                continue;
            }
            if prev_slope != 0.0 && slope.signum() != prev_slope.signum() {
                extrema.push(r - 1);
            }
            prev_slope = slope;
        }
        assert_eq!(extrema.len(), 3, "profile {profile:?}");
        assert_eq!(extrema[1], 20);
        assert!(profile[extrema[0]] < 0.3 && profile[extrema[2]] < 0.3);
        assert!(profile[20] > 0.3);
    }

    #[test]
    fn full_local_gain_blocks_bright_background() {
        let cxr = Image::filled(24, 40, 1.0).unwrap();
        let mask = tube(24, 40, 10..15);
        let style = HandDrawnStyle {
            local_intensity_gain: 1.0,
            ..HandDrawnStyle::default()
        };
        assert_eq!(render_hand_drawn(&cxr, &mask, &hand(style)).unwrap(), cxr);
    }

    #[test]
    fn outputs_stay_in_range() {
        let cxr = Image::from_grid(Grid::from_fn(32, 32, |r, c| {
            ((r * 13 + c * 7) % 17) as f64 / 16.0
        }))
        .unwrap();
        let mask = tube(32, 32, 12..19);
        let strong = HandDrawnStyle {
            body_gain: 0.9,
            border_gain: 2.0,
            centerline_gain: 1.0,
            local_intensity_gain: 0.0,
            ..HandDrawnStyle::default()
        };
        let out = render_hand_drawn(&cxr, &mask, &hand(strong)).unwrap();
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let p = SmoothedMaskParams {
            amplitude: -1.0,
            blur_sigma: 0.7,
        };
        let out = render_smoothed_mask(&cxr, &mask, &p).unwrap();
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn bilinear_hits_grid_points() {
        let g = Grid::from_fn(4, 5, |r, c| (r * 5 + c) as f64);
        assert_eq!(bilinear(&g, 2.0, 3.0), 13.0);
        assert_eq!(bilinear(&g, 1.5, 0.5), 8.0);
        assert_eq!(bilinear(&g, -3.0, 9.0), 4.0);
    }
}
