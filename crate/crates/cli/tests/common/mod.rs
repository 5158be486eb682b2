#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tubegen::frangi::FrangiParams;
use tubegen::io::save_image_with_depth;
use tubegen::io::BitDepth;
use tubegen::kernel::{gaussian_kernel, DerivativeOrder, Kernel1D};
use tubegen::{Grid, Image};

pub fn tubegen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tubegen"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

pub fn ok(args: &[&str]) -> Output {
    let out = tubegen(args);
    assert!(
        out.status.success(),
        "tubegen {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

/// Smooth synthetic background in `[0.2, 0.6]`, written as 8-bit.
pub fn write_background(p: &Path, h: usize, w: usize) {
    let g = Grid::from_fn(h, w, |r, c| {
        let (y, x) = (r as f64, c as f64);
        0.4 + 0.12 * (x / 37.0).sin() * (y / 53.0).cos() + 0.06 * ((x + y) / 71.0).cos()
    });
    save_image_with_depth(&Image::from_grid(g).unwrap(), p, BitDepth::Eight).unwrap();
}

/// Sorted file names of a directory.
pub fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

/// Byte-for-byte comparison of two directory trees.
pub fn same_tree(a: &Path, b: &Path) -> bool {
    let (la, lb) = (listing(a), listing(b));
    if la != lb {
        return false;
    }
    la.iter().all(|n| {
        let (pa, pb) = (a.join(n), b.join(n));
        if pa.is_dir() {
            same_tree(&pa, &pb)
        } else {
            fs::read(&pa).unwrap() == fs::read(&pb).unwrap()
        }
    })
}

pub fn jsonl(p: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - m }) as usize
}

fn dense(img: &Grid, kx: &Kernel1D, ky: &Kernel1D) -> Grid {
    let (h, w) = img.shape();
    let (rx, ry) = (kx.radius() as isize, ky.radius() as isize);
    Grid::from_fn(h, w, |r, c| {
        let mut acc = 0.0;
        for dy in -ry..=ry {
            for dx in -rx..=rx {
                acc += ky.at(dy)
                    * kx.at(dx)
                    * img.get(reflect(r as isize - dy, h), reflect(c as isize - dx, w));
            }
        }
        acc
    })
}

/// Bright-tube vesselness with softmax scale combination, computed by
/// direct 2D convolution and the textbook closed-form eigenvalues. Only
/// the default parameter choices are supported.
pub fn dense_vesselness(img: &Grid, p: &FrangiParams) -> Grid {
    let (h, w) = img.shape();
    let per_scale: Vec<Grid> = p
        .sigmas
        .iter()
        .map(|&s| {
            let g0 = gaussian_kernel(s, DerivativeOrder::Smooth).unwrap();
            let g1 = gaussian_kernel(s, DerivativeOrder::First).unwrap();
            let g2 = gaussian_kernel(s, DerivativeOrder::Second).unwrap();
            let norm = s.powf(p.gamma);
            let ixx = dense(img, &g2, &g0);
            let ixy = dense(img, &g1, &g1);
            let iyy = dense(img, &g0, &g2);
            Grid::from_fn(h, w, |r, c| {
                let (a, b, d) = (
                    ixx.get(r, c) * norm,
                    ixy.get(r, c) * norm,
                    iyy.get(r, c) * norm,
                );
                let mean = 0.5 * (a + d);
                let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
                let (mut l1, mut l2) = (mean - rad, mean + rad);
                if l1.abs() > l2.abs() {
                    std::mem::swap(&mut l1, &mut l2);
                }
                if l2 >= 0.0 {
                    return 0.0;
                }
                let (x1, x2) = (p.intensity_scale * l1, p.intensity_scale * l2);
                let rb2 = (x1 / x2).powi(2);
                let s2 = x1 * x1 + x2 * x2;
                (-rb2 / (2.0 * p.beta * p.beta)).exp() * (1.0 - (-s2 / (2.0 * p.c * p.c)).exp())
            })
        })
        .collect();
    Grid::from_fn(h, w, |r, c| {
        let v: Vec<f64> = per_scale.iter().map(|g| g.get(r, c)).collect();
        let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = v
            .iter()
            .map(|x| ((x - m) / p.softmax_temperature).exp())
            .collect();
        let z: f64 = e.iter().sum();
        v.iter()
            .zip(&e)
            .map(|(x, e)| x * e / z)
            .sum::<f64>()
            .clamp(0.0, 1.0)
    })
}
