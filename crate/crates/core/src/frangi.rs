//! Multi-scale Hessian vesselness and the masked mean tube-shape response,
//! with an analytic gradient with respect to pixel intensities.
//!
//! Per scale `s`, the Hessian entries are Gaussian-derivative convolutions
//! multiplied by `s^gamma`. Their eigenvalues, ordered `|l1| <= |l2|`, feed
//! the blobness ratio `R_B`, the structureness `S = sqrt(l1^2 + l2^2)` and
//!
//! ```text
//! V(s) = exp(-R_B^2 / (2 beta^2)) * (1 - exp(-S^2 / (2 c^2)))
//! ```
//!
//! which is forced to zero when the sign of `l2` contradicts the requested
//! tube polarity. Per-scale maps are combined per pixel by a softmax-weighted
//! average (or a hard max) and averaged over a mask.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conv::SeparableConv;
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Grid};
use crate::kernel::{gaussian_kernel, DerivativeOrder};

/// Which tubes pass the eigenvalue sign gate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    /// Bright ridges on a darker background (`l2 < 0`).
    #[default]
    BrightTubes,
    /// Dark valleys on a brighter background (`l2 > 0`).
    DarkTubes,
    Both,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Combine {
    #[default]
    SoftmaxWeighted,
    HardMax,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlobnessForm {
    /// `|l1| / |l2|`.
    #[default]
    Classical,
    /// `|l1| / sqrt(|l2|)`.
    PaperSqrt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FrangiParams {
    /// Scales in pixels, strictly increasing.
    pub sigmas: Vec<f64>,
    pub beta: f64,
    pub c: f64,
    /// Scale-normalization exponent applied to second derivatives.
    pub gamma: f64,
    pub polarity: Polarity,
    pub combine: Combine,
    pub softmax_temperature: f64,
    pub blobness_form: BlobnessForm,
    /// Factor applied to eigenvalues before `R_B`/`S` are formed: the filter
    /// measures structure in units of `1 / intensity_scale` of the `[0, 1]`
    /// range (255 = 8-bit grey levels).
    pub intensity_scale: f64,
}

impl Default for FrangiParams {
    fn default() -> Self {
        Self {
            sigmas: vec![2.0, 4.0, 6.0],
            beta: 0.5,
            c: 0.5,
            gamma: 2.0,
            polarity: Polarity::BrightTubes,
            combine: Combine::SoftmaxWeighted,
            softmax_temperature: 1.0,
            blobness_form: BlobnessForm::Classical,
            intensity_scale: DEFAULT_INTENSITY_SCALE,
        }
    }
}

pub const DEFAULT_INTENSITY_SCALE: f64 = 255.0;

impl FrangiParams {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() {
            return Err(Error::invalid("sigmas must not be empty"));
        }
        if self.sigmas.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::invalid("sigmas must be positive and finite"));
        }
        if self.sigmas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("sigmas must be strictly increasing"));
        }
        for (name, v) in [
            ("beta", self.beta),
            ("c", self.c),
            ("softmax-temperature", self.softmax_temperature),
            ("intensity-scale", self.intensity_scale),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::invalid(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Second derivatives and ordered eigenvalues at one scale.
#[derive(Clone, Debug)]
pub struct HessianField {
    pub sigma: f64,
    pub ixx: Grid,
    pub ixy: Grid,
    pub iyy: Grid,
    pub lambda1: Grid,
    pub lambda2: Grid,
}

impl HessianField {
    pub fn shape(&self) -> (usize, usize) {
        self.ixx.shape()
    }
}

/// The three scale-normalized derivative convolutions at one scale.
struct HessianOps {
    xx: SeparableConv,
    xy: SeparableConv,
    yy: SeparableConv,
    norm: f64,
}

impl HessianOps {
    fn new(height: usize, width: usize, sigma: f64, gamma: f64) -> Result<Self> {
        let g0 = gaussian_kernel(sigma, DerivativeOrder::Smooth)?;
        let g1 = gaussian_kernel(sigma, DerivativeOrder::First)?;
        let g2 = gaussian_kernel(sigma, DerivativeOrder::Second)?;
        Ok(Self {
            xx: SeparableConv::new(height, width, &g2, &g0)?,
            xy: SeparableConv::new(height, width, &g1, &g1)?,
            yy: SeparableConv::new(height, width, &g0, &g2)?,
            norm: sigma.powf(gamma),
        })
    }

    fn forward(&self, img: &Grid, sigma: f64) -> Result<HessianField> {
        let n = self.norm;
        let ixx = self.xx.apply(img)?.map(|v| v * n);
        let ixy = self.xy.apply(img)?.map(|v| v * n);
        let iyy = self.yy.apply(img)?.map(|v| v * n);
        let (h, w) = img.shape();
        let mut l1 = Vec::with_capacity(h * w);
        let mut l2 = Vec::with_capacity(h * w);
        for ((&a, &b), &c) in ixx.data().iter().zip(ixy.data()).zip(iyy.data()) {
            let (e1, e2) = eigen_2x2(a, b, c);
            l1.push(e1);
            l2.push(e2);
        }
        Ok(HessianField {
            sigma,
            ixx,
            ixy,
            iyy,
            lambda1: Grid::new(h, w, l1)?,
            lambda2: Grid::new(h, w, l2)?,
        })
    }

    /// Pulls gradients on (ixx, ixy, iyy) back to image intensities.
    fn backward(&self, g_xx: &Grid, g_xy: &Grid, g_yy: &Grid) -> Result<Grid> {
        let a = self.xx.apply_adjoint(g_xx)?;
        let b = self.xy.apply_adjoint(g_xy)?;
        let c = self.yy.apply_adjoint(g_yy)?;
        let n = self.norm;
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .zip(c.data())
            .map(|((x, y), z)| n * (x + y + z))
            .collect();
        Grid::new(a.height(), a.width(), data)
    }
}

/// Hessian of `img` at scale `sigma`, scale-normalized by `sigma^gamma`.
pub fn hessian_at_scale(img: &Grid, sigma: f64, gamma: f64) -> Result<HessianField> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::invalid(format!("gamma must be >= 0, got {gamma}")));
    }
    HessianOps::new(img.height(), img.width(), sigma, gamma)?.forward(img, sigma)
}

/// Eigenvalues of `[[ixx, ixy], [ixy, iyy]]` ordered so that `|l1| <= |l2|`.
/// Equal magnitudes of distinct eigenvalues put the negative one first.
pub fn eigen_2x2(ixx: f64, ixy: f64, iyy: f64) -> (f64, f64) {
    let m = 0.5 * (ixx + iyy);
    let d = 0.5 * (ixx - iyy);
    let r = d.hypot(ixy);
    // Larger-magnitude root first, the other from the determinant, to avoid
    // cancellation.
    let (big, small) = if m >= 0.0 {
        let big = m + r;
        let det = ixx * iyy - ixy * ixy;
        (big, if big != 0.0 { det / big } else { m - r })
    } else {
        let big = m - r;
        (big, (ixx * iyy - ixy * ixy) / big)
    };
    // |mu+| < |mu-| exactly when the trace is negative.
    if m < 0.0 {
        (small, big)
    } else {
        (small.min(big), small.max(big))
    }
}

/// Derivatives of the ordered eigenvalues with respect to `(ixx, ixy, iyy)`.
/// At a repeated eigenvalue the rotation-dependent terms are taken as zero.
fn eigen_2x2_jacobian(ixx: f64, ixy: f64, iyy: f64) -> ([f64; 3], [f64; 3]) {
    let m = 0.5 * (ixx + iyy);
    let d = 0.5 * (ixx - iyy);
    let r = d.hypot(ixy);
    let (dr, br) = if r > 0.0 {
        (d / r, ixy / r)
    } else {
        (0.0, 0.0)
    };
    let plus = [0.5 + 0.5 * dr, br, 0.5 - 0.5 * dr];
    let minus = [0.5 - 0.5 * dr, -br, 0.5 + 0.5 * dr];
    if m < 0.0 {
        (plus, minus)
    } else {
        (minus, plus)
    }
}

/// `|l1| / |l2|`, zero when `l2 = 0`.
pub fn blobness(l1: f64, l2: f64) -> f64 {
    blobness_with(BlobnessForm::Classical, l1, l2)
}

pub fn blobness_with(form: BlobnessForm, l1: f64, l2: f64) -> f64 {
    if l2 == 0.0 {
        return 0.0;
    }
    match form {
        BlobnessForm::Classical => l1.abs() / l2.abs(),
        BlobnessForm::PaperSqrt => l1.abs() / l2.abs().sqrt(),
    }
}

/// Frobenius norm of the Hessian.
pub fn structureness(l1: f64, l2: f64) -> f64 {
    l1.hypot(l2)
}

fn gated(polarity: Polarity, l2: f64) -> bool {
    match polarity {
        Polarity::BrightTubes => l2 > 0.0,
        Polarity::DarkTubes => l2 < 0.0,
        Polarity::Both => false,
    }
}

/// Single-pixel response and its partial derivatives with respect to the
/// unscaled eigenvalues `(l1, l2)`.
fn vesselness_pixel(l1: f64, l2: f64, p: &FrangiParams) -> (f64, f64, f64) {
    if l2 == 0.0 || gated(p.polarity, l2) {
        return (0.0, 0.0, 0.0);
    }
    let k = p.intensity_scale;
    let (a, b) = (k * l1, k * l2);
    // R_B^2 and its partials.
    let (rb2, drb2_da, drb2_db) = match p.blobness_form {
        BlobnessForm::Classical => {
            let inv = 1.0 / (b * b);
            (a * a * inv, 2.0 * a * inv, -2.0 * a * a * inv / b)
        }
        BlobnessForm::PaperSqrt => {
            let inv = 1.0 / b.abs();
            (a * a * inv, 2.0 * a * inv, -a * a * inv * inv * b.signum())
        }
    };
    let s2 = a * a + b * b;
    let two_beta2 = 2.0 * p.beta * p.beta;
    let two_c2 = 2.0 * p.c * p.c;
    let blob = (-rb2 / two_beta2).exp();
    let e = (-s2 / two_c2).exp();
    let structure = 1.0 - e;
    let v = blob * structure;
    let dv_drb2 = -v / two_beta2;
    let dv_ds2 = blob * e / two_c2;
    let dv_da = dv_drb2 * drb2_da + dv_ds2 * 2.0 * a;
    let dv_db = dv_drb2 * drb2_db + dv_ds2 * 2.0 * b;
    (v, k * dv_da, k * dv_db)
}

/// Per-pixel response at one scale, in `[0, 1]`.
pub fn vesselness_at_scale(field: &HessianField, params: &FrangiParams) -> Grid {
    let (h, w) = field.shape();
    let data = field
        .lambda1
        .data()
        .iter()
        .zip(field.lambda2.data())
        .map(|(&l1, &l2)| vesselness_pixel(l1, l2, params).0)
        .collect();
    Grid::new(h, w, data).expect("field shape")
}

/// Combined response and per-scale responses.
#[derive(Clone, Debug)]
pub struct VesselnessMap {
    pub combined: Grid,
    pub per_scale: Vec<Grid>,
}

/// Combines one pixel's per-scale responses; also returns
/// `d combined / d V_s` for each scale.
pub fn combine_scales(values: &[f64], params: &FrangiParams) -> (f64, Vec<f64>) {
    match params.combine {
        Combine::HardMax => {
            let mut best = 0;
            for (i, &v) in values.iter().enumerate() {
                if v > values[best] {
                    best = i;
                }
            }
            let mut jac = vec![0.0; values.len()];
            jac[best] = 1.0;
            (values[best], jac)
        }
        Combine::SoftmaxWeighted => {
            let t = params.softmax_temperature;
            let vmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = values.iter().map(|v| ((v - vmax) / t).exp()).collect();
            let z: f64 = exps.iter().sum();
            let mut combined = 0.0;
            let weights: Vec<f64> = exps.iter().map(|e| e / z).collect();
            for (w, v) in weights.iter().zip(values) {
                combined += w * v;
            }
            let jac = weights
                .iter()
                .zip(values)
                .map(|(w, v)| w * (1.0 + (v - combined) / t))
                .collect();
            // A convex combination of [0, 1] values; guard rounding.
            (combined.clamp(0.0, 1.0), jac)
        }
    }
}

struct ScaleState {
    ops: HessianOps,
    field: HessianField,
    response: Grid,
}

fn forward_scales(img: &Grid, params: &FrangiParams) -> Result<Vec<ScaleState>> {
    params.validate()?;
    let (h, w) = img.shape();
    params
        .sigmas
        .par_iter()
        .map(|&sigma| {
            let ops = HessianOps::new(h, w, sigma, params.gamma)?;
            let field = ops.forward(img, sigma)?;
            let response = vesselness_at_scale(&field, params);
            Ok(ScaleState {
                ops,
                field,
                response,
            })
        })
        .collect()
}

fn combine_all(states: &[ScaleState], params: &FrangiParams) -> Grid {
    let (h, w) = states[0].response.shape();
    let mut buf = vec![0.0; states.len()];
    let data = (0..h * w)
        .map(|i| {
            for (b, s) in buf.iter_mut().zip(states) {
                *b = s.response.data()[i];
            }
            combine_scales(&buf, params).0
        })
        .collect();
    Grid::new(h, w, data).expect("shape")
}

pub fn multiscale_vesselness(img: &Grid, params: &FrangiParams) -> Result<VesselnessMap> {
    let states = forward_scales(img, params)?;
    let combined = combine_all(&states, params);
    Ok(VesselnessMap {
        combined,
        per_scale: states.into_iter().map(|s| s.response).collect(),
    })
}

fn check_mask(img: &Grid, mask: &BinaryMask) -> Result<usize> {
    img.check_same_shape(mask.shape(), "mask")?;
    let n = mask.count();
    if n == 0 {
        return Err(Error::invalid("mask has no set pixels"));
    }
    Ok(n)
}

fn masked_mean(grid: &Grid, mask: &BinaryMask) -> f64 {
    let (sum, n) = grid
        .data()
        .iter()
        .zip(mask.data())
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    sum / n as f64
}

/// Mean of the combined response over the set pixels of `mask`.
pub fn masked_mean_response(img: &Grid, mask: &BinaryMask, params: &FrangiParams) -> Result<f64> {
    check_mask(img, mask)?;
    let map = multiscale_vesselness(img, params)?;
    Ok(masked_mean(&map.combined, mask))
}

/// Backpropagates per-scale response gradients to image intensities.
fn backprop_scales(states: &[ScaleState], grad_v: &[Grid], params: &FrangiParams) -> Result<Grid> {
    let (h, w) = states[0].response.shape();
    let per_scale: Vec<Grid> = states
        .par_iter()
        .zip(grad_v)
        .map(|(s, gv)| {
            let f = &s.field;
            let mut gxx = vec![0.0; h * w];
            let mut gxy = vec![0.0; h * w];
            let mut gyy = vec![0.0; h * w];
            for i in 0..h * w {
                let g = gv.data()[i];
                if g == 0.0 {
                    continue;
                }
                let (_, dv1, dv2) =
                    vesselness_pixel(f.lambda1.data()[i], f.lambda2.data()[i], params);
                if dv1 == 0.0 && dv2 == 0.0 {
                    continue;
                }
                let (j1, j2) =
                    eigen_2x2_jacobian(f.ixx.data()[i], f.ixy.data()[i], f.iyy.data()[i]);
                let (g1, g2) = (g * dv1, g * dv2);
                gxx[i] = g1 * j1[0] + g2 * j2[0];
                gxy[i] = g1 * j1[1] + g2 * j2[1];
                gyy[i] = g1 * j1[2] + g2 * j2[2];
            }
            s.ops.backward(
                &Grid::new(h, w, gxx)?,
                &Grid::new(h, w, gxy)?,
                &Grid::new(h, w, gyy)?,
            )
        })
        .collect::<Result<_>>()?;
    // Fixed scale order keeps the sum independent of scheduling.
    let mut total = Grid::zeros(h, w);
    for g in &per_scale {
        for (t, v) in total.data_mut().iter_mut().zip(g.data()) {
            *t += v;
        }
    }
    Ok(total)
}

/// Gradient of each combined pixel with respect to each scale's response,
/// scaled by the masked-mean weight.
fn response_gradients(
    states: &[ScaleState],
    mask: &BinaryMask,
    n: usize,
    params: &FrangiParams,
) -> Vec<Grid> {
    let (h, w) = states[0].response.shape();
    let mut grads = vec![vec![0.0; h * w]; states.len()];
    let mut buf = vec![0.0; states.len()];
    let weight = 1.0 / n as f64;
    for (i, _) in mask.data().iter().enumerate().filter(|(_, &m)| m) {
        for (b, s) in buf.iter_mut().zip(states) {
            *b = s.response.data()[i];
        }
        let (_, jac) = combine_scales(&buf, params);
        for (g, j) in grads.iter_mut().zip(jac) {
            g[i] = weight * j;
        }
    }
    grads
        .into_iter()
        .map(|g| Grid::new(h, w, g).expect("shape"))
        .collect()
}

/// Masked mean response and its gradient with respect to every pixel.
pub fn response_and_gradient(
    img: &Grid,
    mask: &BinaryMask,
    params: &FrangiParams,
) -> Result<(f64, Grid)> {
    let n = check_mask(img, mask)?;
    let states = forward_scales(img, params)?;
    let value = masked_mean(&combine_all(&states, params), mask);
    let grad_v = response_gradients(&states, mask, n, params);
    Ok((value, backprop_scales(&states, &grad_v, params)?))
}

/// `d V_avg / d I(p)` for every pixel `p`.
pub fn grad_masked_mean_response(
    img: &Grid,
    mask: &BinaryMask,
    params: &FrangiParams,
) -> Result<Grid> {
    Ok(response_and_gradient(img, mask, params)?.1)
}
