use tubegen::maskgen::{
    generate_fake_mask, rasterize_polyline, spline_interpolate, LocationPrior, PriorKind, TubeSpec,
};
use tubegen::morphology::{count_components, distance_to};
use tubegen::skeleton::{branch_points, endpoints, skeletonize};
use tubegen::{BinaryMask, RngStream};

const SIZE: usize = 256;
const TRIALS: u64 = 200;

fn prior(kind: PriorKind) -> LocationPrior {
    LocationPrior::default_for(kind).unwrap()
}

fn single(kind: PriorKind, spec: TubeSpec) -> Vec<(LocationPrior, TubeSpec)> {
    vec![(prior(kind), spec)]
}

fn centreline(points: &[tubegen::maskgen::Point], samples: usize) -> BinaryMask {
    let line = spline_interpolate(points, samples)
        .unwrap()
        .clamped(SIZE, SIZE);
    rasterize_polyline(&line, SIZE, SIZE).unwrap()
}

/// Longest run of set pixels through `(r, c)` along one axis.
fn run(mask: &BinaryMask, r: usize, c: usize, vertical: bool) -> usize {
    let step = |k: isize| -> bool {
        let (rr, cc) = if vertical {
            (r as isize + k, c as isize)
        } else {
            (r as isize, c as isize + k)
        };
        mask.get_signed(rr, cc)
    };
    let mut n = 1;
    let mut k = 1;
    while step(k) {
        n += 1;
        k += 1;
    }
    k = -1;
    while step(k) {
        n += 1;
        k -= 1;
    }
    n
}

#[test]
fn deterministic_per_seed_and_stream() {
    let priors = single(PriorKind::Cvc, TubeSpec::default());
    for seed in 0..TRIALS {
        let a = generate_fake_mask(&priors, SIZE, SIZE, &mut RngStream::new(seed, 3)).unwrap();
        let b = generate_fake_mask(&priors, SIZE, SIZE, &mut RngStream::new(seed, 3)).unwrap();
        assert_eq!(a, b);
    }
    let a = generate_fake_mask(&priors, SIZE, SIZE, &mut RngStream::new(1, 0)).unwrap();
    let b = generate_fake_mask(&priors, SIZE, SIZE, &mut RngStream::new(1, 1)).unwrap();
    assert_ne!(a.mask, b.mask);
}

#[test]
fn single_tube_skeletons_are_simple_curves() {
    for kind in [
        PriorKind::Cvc,
        PriorKind::ChestTube,
        PriorKind::Endotracheal,
    ] {
        let priors = single(kind, TubeSpec::default());
        let simple = (0..TRIALS)
            .filter(|&seed| {
                let m =
                    generate_fake_mask(&priors, SIZE, SIZE, &mut RngStream::new(seed, 0)).unwrap();
                let skel = skeletonize(&m.mask);
                count_components(&skel) == 1
                    && endpoints(&skel).len() == 2
                    && branch_points(&skel).is_empty()
            })
            .count();
        assert!(
            simple as f64 >= 0.95 * TRIALS as f64,
            "{kind:?}: {simple}/{TRIALS}"
        );
    }
}

#[test]
fn measured_width_respects_dilation_bound() {
    let spec = TubeSpec::new(4, (3, 9), 16, 60.0).unwrap();
    let priors = single(PriorKind::Cvc, spec);
    for seed in 0..TRIALS {
        let m = generate_fake_mask(&priors, SIZE, SIZE, &mut RngStream::new(seed, 0)).unwrap();
        let tube = &m.tubes[0];
        let line = centreline(&tube.control_points, 16);
        let dist = distance_to(&line);
        let half = m
            .mask
            .data()
            .iter()
            .zip(dist.data())
            .filter(|(&set, _)| set)
            .fold(0.0f64, |acc, (_, &d)| acc.max(d));
        let measured = 2.0 * half + 1.0;
        assert_eq!(measured, tube.width as f64, "seed {seed}");
        assert!((3..=9).contains(&tube.width) && tube.width % 2 == 1);
    }
}

#[test]
fn width_three_cross_sections() {
    let spec = TubeSpec::new(4, (3, 3), 16, 60.0).unwrap();
    let priors = single(PriorKind::Cvc, spec);
    for seed in 0..50 {
        let m = generate_fake_mask(&priors, SIZE, SIZE, &mut RngStream::new(seed, 0)).unwrap();
        let line = centreline(&m.tubes[0].control_points, 16);
        let background = BinaryMask::from_fn(SIZE, SIZE, |r, c| !m.mask.get(r, c));
        let inside = distance_to(&background);
        for r in 0..SIZE {
            for c in 0..SIZE {
                if !line.get(r, c) {
                    continue;
                }
                let thickness = run(&m.mask, r, c, true).min(run(&m.mask, r, c, false));
                assert!(
                    (3..=5).contains(&thickness),
                    "seed {seed} at ({r}, {c}): {thickness}"
                );
                assert!(inside.get(r, c) >= std::f64::consts::SQRT_2);
            }
        }
    }
}

#[test]
fn disjoint_priors_give_one_component_each() {
    let spec = TubeSpec::default();
    let priors = vec![
        (prior(PriorKind::Endotracheal), spec),
        (prior(PriorKind::ChestTube), spec),
    ];
    for seed in 0..50 {
        let m = generate_fake_mask(&priors, SIZE, SIZE, &mut RngStream::new(seed, 0)).unwrap();
        assert_eq!(count_components(&m.mask), 2, "seed {seed}");
        assert_eq!(m.tubes.len(), 2);
    }
}
