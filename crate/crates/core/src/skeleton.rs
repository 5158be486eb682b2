//! Topology-preserving thinning to 8-connected one-pixel-wide skeletons.
//!
//! Two alternating directional passes in the style of Zhang and Suen remove
//! border pixels. Each candidate is re-checked against the current image
//! before removal and must be a simple point (Yokoi 8-connectivity number 1)
//! with at least two neighbours, so components and holes are preserved. The
//! peeling shortens every branch by its half-width; the remaining endpoints
//! are then walked back outward along their local direction through interior
//! pixels of the original mask, ending one pixel short of its boundary.

use crate::grid::BinaryMask;

/// Neighbours starting east, counter-clockwise: E, NE, N, NW, W, SW, S, SE.
const RING: [(isize, isize); 8] = [
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
];

fn ring(img: &BinaryMask, r: usize, c: usize) -> [bool; 8] {
    RING.map(|(dr, dc)| img.get_signed(r as isize + dr, c as isize + dc))
}

/// Yokoi connectivity number for 8-connected foreground.
fn connectivity(x: &[bool; 8]) -> usize {
    let bg = |k: usize| !x[k % 8];
    [0, 2, 4, 6]
        .into_iter()
        .filter(|&k| bg(k) && !(bg(k + 1) && bg(k + 2)))
        .count()
}

fn removable(x: &[bool; 8]) -> bool {
    let b = x.iter().filter(|&&v| v).count();
    (2..=6).contains(&b) && connectivity(x) == 1
}

fn directional(x: &[bool; 8], pass: usize) -> bool {
    let (e, n, w, s) = (x[0], x[2], x[4], x[6]);
    if pass == 0 {
        !(n && e && s) && !(e && s && w)
    } else {
        !(n && e && w) && !(n && s && w)
    }
}

fn thin(img: &mut BinaryMask) {
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let candidates: Vec<(usize, usize)> = img
                .set_pixels()
                .filter(|&(r, c)| {
                    let x = ring(img, r, c);
                    removable(&x) && directional(&x, pass)
                })
                .collect();
            for (r, c) in candidates {
                // Endpoints were screened on the snapshot; here only
                // simplicity must still hold after earlier removals.
                if connectivity(&ring(img, r, c)) == 1 {
                    img.set(r, c, false);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

fn skeleton_neighbors(
    img: &BinaryMask,
    r: isize,
    c: isize,
) -> impl Iterator<Item = (isize, isize)> + '_ {
    RING.iter()
        .map(move |&(dr, dc)| (r + dr, c + dc))
        .filter(|&(rr, cc)| img.get_signed(rr, cc))
}

fn extend_endpoints(skel: &mut BinaryMask, mask: &BinaryMask) {
    let endpoints: Vec<((isize, isize), (isize, isize))> = skel
        .set_pixels()
        .filter_map(|(r, c)| {
            let (r, c) = (r as isize, c as isize);
            let mut it = skeleton_neighbors(skel, r, c);
            match (it.next(), it.next()) {
                (Some(n), None) => Some(((r, c), (r - n.0, c - n.1))),
                _ => None,
            }
        })
        .collect();
    for ((r, c), (dr, dc)) in endpoints {
        let mut p = (r, c);
        loop {
            let q = (p.0 + dr, p.1 + dc);
            let interior = RING
                .iter()
                .all(|&(dr, dc)| mask.get_signed(q.0 + dr, q.1 + dc));
            if !interior || !mask.get_signed(q.0, q.1) || skel.get_signed(q.0, q.1) {
                break;
            }
            if skeleton_neighbors(skel, q.0, q.1).any(|n| n != p) {
                break;
            }
            skel.set(q.0 as usize, q.1 as usize, true);
            p = q;
        }
    }
}

/// One-pixel-wide skeleton of `mask`. Idempotent, never adds pixels outside
/// the mask and keeps the number of 8-connected components.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let mut skel = mask.clone();
    thin(&mut skel);
    extend_endpoints(&mut skel, mask);
    skel
}

/// Set pixels with exactly one 8-neighbour in the set.
pub fn endpoints(skel: &BinaryMask) -> Vec<(usize, usize)> {
    skel.set_pixels()
        .filter(|&(r, c)| skeleton_neighbors(skel, r as isize, c as isize).count() == 1)
        .collect()
}

/// Set pixels with three or more 8-neighbours in the set.
pub fn branch_points(skel: &BinaryMask) -> Vec<(usize, usize)> {
    skel.set_pixels()
        .filter(|&(r, c)| skeleton_neighbors(skel, r as isize, c as isize).count() >= 3)
        .collect()
}
