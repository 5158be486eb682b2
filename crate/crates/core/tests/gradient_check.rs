use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tubegen::frangi::{grad_masked_mean_response, masked_mean_response, FrangiParams};
use tubegen::morphology::dilate;
use tubegen::{BinaryMask, Grid};

const STEP: f64 = 1e-3;

/// Smooth background with a faint random ridge and mild noise.
fn sample(seed: u64) -> (Grid, BinaryMask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (32, 32);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (dx, dy) = (angle.cos(), angle.sin());
    let (cx, cy) = (rng.random_range(12.0..20.0), rng.random_range(12.0..20.0));
    let amp = rng.random_range(0.02..0.1);
    let width = rng.random_range(1.0..3.0);
    let img = Grid::from_fn(h, w, |r, c| {
        let d = (c as f64 - cx) * dy - (r as f64 - cy) * dx;
        0.3 + amp * (-d * d / (2.0 * width * width)).exp() + rng.random_range(-0.005..0.005)
    });
    let line = BinaryMask::from_fn(h, w, |r, c| {
        let d = (c as f64 - cx) * dy - (r as f64 - cy) * dx;
        let along = (c as f64 - cx) * dx + (r as f64 - cy) * dy;
        d.abs() < 0.5 && along.abs() < 10.0
    });
    let radius = rng.random_range(0..3);
    (img, dilate(&line, radius))
}

struct Check {
    checked: usize,
    passed: usize,
    rest_max_abs: f64,
}

fn check(img: &Grid, mask: &BinaryMask, p: &FrangiParams) -> Check {
    let grad = grad_masked_mean_response(img, mask, p).unwrap();
    let mut out = Check {
        checked: 0,
        passed: 0,
        rest_max_abs: 0.0,
    };
    let mut probe = img.clone();
    for i in 0..img.len() {
        let x = img.data()[i];
        probe.data_mut()[i] = x + STEP;
        let up = masked_mean_response(&probe, mask, p).unwrap();
        probe.data_mut()[i] = x - STEP;
        let down = masked_mean_response(&probe, mask, p).unwrap();
        probe.data_mut()[i] = x;
        let fd = (up - down) / (2.0 * STEP);
        let g = grad.data()[i];
        if g.abs() > 1e-8 {
            out.checked += 1;
            if (g - fd).abs() <= 1e-3 * g.abs().max(fd.abs()) {
                out.passed += 1;
            }
        } else {
            out.rest_max_abs = out.rest_max_abs.max((g - fd).abs());
        }
    }
    out
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let p = FrangiParams::default();
    let (mut checked, mut passed, mut rest) = (0, 0, 0.0f64);
    for seed in 0..4 {
        let (img, mask) = sample(seed);
        let c = check(&img, &mask, &p);
        checked += c.checked;
        passed += c.passed;
        rest = rest.max(c.rest_max_abs);
    }
    assert!(checked > 0);
    let frac = passed as f64 / checked as f64;
    assert!(frac >= 0.95, "{passed}/{checked}");
    assert!(rest <= 1e-4, "{rest}");
}
