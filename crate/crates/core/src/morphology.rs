//! Binary morphology with Euclidean disc structuring elements, exact
//! Euclidean distance transforms, and connected-component labelling.

use crate::grid::{BinaryMask, Grid};

/// Offsets `(dr, dc)` with `dr^2 + dc^2 <= radius^2`.
pub fn disc_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let r2 = r * r;
    let mut out = Vec::new();
    for dr in -r..=r {
        for dc in -r..=r {
            if dr * dr + dc * dc <= r2 {
                out.push((dr, dc));
            }
        }
    }
    out
}

/// Dilation by a Euclidean disc of `radius` pixels. Radius 0 is the identity.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (h, w) = mask.shape();
    let disc = disc_offsets(radius);
    let mut out = BinaryMask::empty(h, w);
    for (r, c) in mask.set_pixels() {
        for &(dr, dc) in &disc {
            let (rr, cc) = (r as isize + dr, c as isize + dc);
            if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                out.set(rr as usize, cc as usize, true);
            }
        }
    }
    out
}

/// Erosion by a Euclidean disc. Pixels outside the image count as set, so a
/// shape touching the border is not eroded from that side.
pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (h, w) = mask.shape();
    let disc = disc_offsets(radius);
    BinaryMask::from_fn(h, w, |r, c| {
        mask.get(r, c)
            && disc.iter().all(|&(dr, dc)| {
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                rr < 0
                    || cc < 0
                    || rr as usize >= h
                    || cc as usize >= w
                    || mask.get(rr as usize, cc as usize)
            })
    })
}

/// Inner morphological boundary: the mask minus its radius-1 erosion.
pub fn inner_boundary(mask: &BinaryMask) -> BinaryMask {
    mask.difference(&erode(mask, 1)).expect("same shape")
}

/// 1D squared-distance lower envelope (Felzenszwalb & Huttenlocher).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    // Skip infinite samples; they never contribute to the envelope.
    let mut k: isize = -1;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let fq = f[q] + (q * q) as f64;
        loop {
            if k < 0 {
                k = 0;
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            let p = v[k as usize];
            let s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k as usize] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k as usize] = q;
            z[k as usize] = s;
            z[k as usize + 1] = f64::INFINITY;
            break;
        }
    }
    if k < 0 {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut j = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        while z[j + 1] < q as f64 {
            j += 1;
        }
        let p = v[j];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Squared Euclidean distance from every pixel to the nearest set pixel of
/// `mask` (0 on set pixels, `+inf` everywhere when the mask is empty).
pub fn squared_distance_to(mask: &BinaryMask) -> Grid {
    let (h, w) = mask.shape();
    let mut g = Grid::from_fn(
        h,
        w,
        |r, c| if mask.get(r, c) { 0.0 } else { f64::INFINITY },
    );
    let n = h.max(w);
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    let mut col = vec![0.0; h];
    let mut col_out = vec![0.0; h];
    for c in 0..w {
        for (r, x) in col.iter_mut().enumerate() {
            *x = g.get(r, c);
        }
        edt_1d(&col, &mut col_out, &mut v, &mut z);
        for (r, &x) in col_out.iter().enumerate() {
            g.set(r, c, x);
        }
    }
    let mut row_out = vec![0.0; w];
    for r in 0..h {
        let row = g.row(r).to_vec();
        edt_1d(&row, &mut row_out, &mut v, &mut z);
        g.data_mut()[r * w..(r + 1) * w].copy_from_slice(&row_out);
    }
    g
}

/// Euclidean distance to the nearest set pixel.
pub fn distance_to(mask: &BinaryMask) -> Grid {
    squared_distance_to(mask).map(f64::sqrt)
}

pub const NEIGHBORS_8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// 8-connected component labels (0 = background, components numbered from 1
/// in raster order of their first pixel) and the component count.
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, usize) {
    let (h, w) = mask.shape();
    let mut labels = vec![0u32; h * w];
    let mut count = 0u32;
    let mut stack = Vec::new();
    for start in 0..h * w {
        if !mask.data()[start] || labels[start] != 0 {
            continue;
        }
        count += 1;
        labels[start] = count;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            for (dr, dc) in NEIGHBORS_8 {
                let (rr, cc) = (r + dr, c + dc);
                if mask.get_signed(rr, cc) {
                    let j = rr as usize * w + cc as usize;
                    if labels[j] == 0 {
                        labels[j] = count;
                        stack.push(j);
                    }
                }
            }
        }
    }
    (labels, count as usize)
}

pub fn count_components(mask: &BinaryMask) -> usize {
    label_components(mask).1
}
