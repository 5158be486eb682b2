//! Separable convolution with reflect-101 borders, and its adjoint.
//!
//! A 1D convolution along one axis is a sparse linear operator `M` with
//! `(M f)[r] = sum_j k[j] f[reflect(r - j)]`. Building `M` explicitly lets the
//! same code apply the operator and its transpose, which the vesselness
//! gradient needs.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernel::Kernel1D;

/// Border handling for [`convolve_separable`]. Only reflect-101 (mirror
/// without repeating the edge sample: `dcb|abcd|cba`) is supported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Border {
    #[default]
    Reflect101,
}

/// Maps any signed index into `0..n` by reflect-101 mirroring.
#[inline]
pub fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// One axis of a separable convolution, stored row-wise as `(source, weight)`.
#[derive(Clone, Debug)]
struct AxisOperator {
    rows: Vec<Vec<(usize, f64)>>,
}

impl AxisOperator {
    fn new(kernel: &Kernel1D, n: usize) -> Self {
        let rows = (0..n)
            .map(|r| {
                kernel
                    .offsets()
                    .map(|(j, w)| (reflect101(r as isize - j, n), w))
                    .collect()
            })
            .collect();
        Self { rows }
    }

    fn transpose(&self) -> Self {
        let n = self.rows.len();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, row) in self.rows.iter().enumerate() {
            for &(s, w) in row {
                rows[s].push((r, w));
            }
        }
        Self { rows }
    }

    /// Applies the operator along each row of `grid` (the x axis).
    fn apply_x(&self, grid: &Grid) -> Grid {
        let (h, w) = grid.shape();
        let mut out = vec![0.0; h * w];
        out.par_chunks_mut(w.max(1))
            .enumerate()
            .for_each(|(r, out_row)| {
                let src = grid.row(r);
                for (c, o) in out_row.iter_mut().enumerate() {
                    *o = self.rows[c].iter().map(|&(s, k)| k * src[s]).sum();
                }
            });
        Grid::new(h, w, out).expect("shape preserved")
    }

    /// Applies the operator along each column of `grid` (the y axis).
    fn apply_y(&self, grid: &Grid) -> Grid {
        let (h, w) = grid.shape();
        let mut out = vec![0.0; h * w];
        out.par_chunks_mut(w.max(1))
            .enumerate()
            .for_each(|(r, out_row)| {
                for &(s, k) in &self.rows[r] {
                    let src = grid.row(s);
                    for (o, v) in out_row.iter_mut().zip(src) {
                        *o += k * v;
                    }
                }
            });
        Grid::new(h, w, out).expect("shape preserved")
    }
}

/// A separable 2D convolution bound to an image geometry.
///
/// `apply` computes `Ky * (Kx * f)`; `apply_adjoint` computes the exact
/// transpose of that linear map (border reflections included).
#[derive(Clone, Debug)]
pub struct SeparableConv {
    height: usize,
    width: usize,
    x: AxisOperator,
    y: AxisOperator,
}

impl SeparableConv {
    pub fn new(height: usize, width: usize, kx: &Kernel1D, ky: &Kernel1D) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("cannot convolve an empty grid"));
        }
        if kx.len() > 4 * width || ky.len() > 4 * height {
            return Err(Error::invalid(format!(
                "kernel of {}x{} taps exceeds 4x the {height}x{width} image extent",
                ky.len(),
                kx.len()
            )));
        }
        Ok(Self {
            height,
            width,
            x: AxisOperator::new(kx, width),
            y: AxisOperator::new(ky, height),
        })
    }

    pub fn apply(&self, grid: &Grid) -> Result<Grid> {
        grid.check_same_shape((self.height, self.width), "convolution input")?;
        Ok(self.y.apply_y(&self.x.apply_x(grid)))
    }

    pub fn apply_adjoint(&self, grid: &Grid) -> Result<Grid> {
        grid.check_same_shape((self.height, self.width), "adjoint convolution input")?;
        let yt = self.y.transpose();
        let xt = self.x.transpose();
        Ok(xt.apply_x(&yt.apply_y(grid)))
    }
}

/// Convolves rows with `kx` and columns with `ky` under reflect-101 borders.
pub fn convolve_separable(
    grid: &Grid,
    kx: &Kernel1D,
    ky: &Kernel1D,
    border: Border,
) -> Result<Grid> {
    let Border::Reflect101 = border;
    SeparableConv::new(grid.height(), grid.width(), kx, ky)?.apply(grid)
}

/// Isotropic Gaussian blur (order-0 kernels on both axes).
pub fn gaussian_blur(grid: &Grid, sigma: f64) -> Result<Grid> {
    let k = crate::kernel::gaussian_kernel(sigma, crate::kernel::DerivativeOrder::Smooth)?;
    convolve_separable(grid, &k, &k, Border::Reflect101)
}
