//! Procedural fake tube masks: control points drawn from a location prior,
//! joined by a centripetal Catmull-Rom spline, rasterized and dilated.
//!
//! Prior polygons live in normalized coordinates, `x` along columns and `y`
//! along rows, both in `[0, 1]`. Generated control points are mapped to pixel
//! coordinates by scaling with `width - 1` and `height - 1`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::BinaryMask;
use crate::morphology::dilate;
use crate::rng::RngStream;

/// Attempts before control point sampling gives up.
pub const MAX_ATTEMPTS: usize = 100;

/// Draws per point before a polygon is declared too thin to sample.
const MAX_POINT_DRAWS: usize = 10_000;

const EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    fn lerp(self, o: Point, t: f64) -> Point {
        Point::new(self.x + (o.x - self.x) * t, self.y + (o.y - self.y) * t)
    }

    pub fn distance(self, o: Point) -> f64 {
        self.sub(o).norm()
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point::new(x, y)
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    Cvc,
    ChestTube,
    Endotracheal,
    Custom,
}

impl PriorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PriorKind::Cvc => "cvc",
            PriorKind::ChestTube => "chest-tube",
            PriorKind::Endotracheal => "endotracheal",
            PriorKind::Custom => "custom",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Edge {
    Top,
    Bottom,
    Left,
    Right,
}

impl Edge {
    fn contains(self, p: Point) -> bool {
        match self {
            Edge::Top => p.y.abs() <= EPS,
            Edge::Bottom => (p.y - 1.0).abs() <= EPS,
            Edge::Left => p.x.abs() <= EPS,
            Edge::Right => (p.x - 1.0).abs() <= EPS,
        }
    }

    fn inward(self) -> Point {
        match self {
            Edge::Top => Point::new(0.0, 1.0),
            Edge::Bottom => Point::new(0.0, -1.0),
            Edge::Left => Point::new(1.0, 0.0),
            Edge::Right => Point::new(-1.0, 0.0),
        }
    }
}

/// Region a tube of one kind may occupy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrior", rename_all = "kebab-case")]
pub struct LocationPrior {
    name: PriorKind,
    polygon: Vec<Point>,
    entry_edge: Option<Edge>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct RawPrior {
    name: PriorKind,
    polygon: Vec<Point>,
    #[serde(default)]
    entry_edge: Option<Edge>,
}

impl TryFrom<RawPrior> for LocationPrior {
    type Error = Error;

    fn try_from(raw: RawPrior) -> Result<Self> {
        LocationPrior::new(raw.name, raw.polygon, raw.entry_edge)
    }
}

impl LocationPrior {
    pub fn new(name: PriorKind, polygon: Vec<Point>, entry_edge: Option<Edge>) -> Result<Self> {
        if polygon.len() < 3 {
            return Err(Error::invalid(format!(
                "prior polygon needs at least 3 vertices, got {}",
                polygon.len()
            )));
        }
        for p in &polygon {
            if !(p.x.is_finite() && p.y.is_finite())
                || !(0.0..=1.0).contains(&p.x)
                || !(0.0..=1.0).contains(&p.y)
            {
                return Err(Error::invalid(format!(
                    "prior vertex ({}, {}) outside the unit square",
                    p.x, p.y
                )));
            }
        }
        if signed_area(&polygon).abs() <= EPS {
            return Err(Error::invalid("prior polygon has zero area"));
        }
        if self_intersects(&polygon) {
            return Err(Error::invalid("prior polygon is self-intersecting"));
        }
        let prior = Self {
            name,
            polygon,
            entry_edge,
        };
        if let Some(edge) = entry_edge {
            if prior.entry_segments(edge).is_empty() {
                return Err(Error::invalid(format!(
                    "prior polygon has no side lying on the {edge:?} border"
                )));
            }
        }
        Ok(prior)
    }

    pub fn name(&self) -> PriorKind {
        self.name
    }

    pub fn polygon(&self) -> &[Point] {
        &self.polygon
    }

    pub fn entry_edge(&self) -> Option<Edge> {
        self.entry_edge
    }

    pub fn contains(&self, p: Point) -> bool {
        let n = self.polygon.len();
        let mut inside = false;
        for i in 0..n {
            let a = self.polygon[i];
            let b = self.polygon[(i + 1) % n];
            if on_segment(p, a, b) {
                return true;
            }
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Polygon sides lying on the given border.
    fn entry_segments(&self, edge: Edge) -> Vec<(Point, Point)> {
        let n = self.polygon.len();
        (0..n)
            .map(|i| (self.polygon[i], self.polygon[(i + 1) % n]))
            .filter(|&(a, b)| edge.contains(a) && edge.contains(b) && a.distance(b) > EPS)
            .collect()
    }

    /// Unit direction of largest vertex spread. Points away from the entry
    /// edge when one is set.
    fn principal_axis(&self) -> Point {
        let n = self.polygon.len() as f64;
        let cx = self.polygon.iter().map(|p| p.x).sum::<f64>() / n;
        let cy = self.polygon.iter().map(|p| p.y).sum::<f64>() / n;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for p in &self.polygon {
            let (dx, dy) = (p.x - cx, p.y - cy);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let mut axis = Point::new(theta.cos(), theta.sin());
        let reference = match self.entry_edge {
            Some(edge) => edge.inward(),
            None => Point::new(1.0, 1e-3),
        };
        if axis.dot(reference) < 0.0 {
            axis = Point::new(-axis.x, -axis.y);
        }
        axis
    }

    fn bounds(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.polygon {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo, hi)
    }

    fn sample_inside(&self, rng: &mut RngStream) -> Result<Point> {
        let (lo, hi) = self.bounds();
        for _ in 0..MAX_POINT_DRAWS {
            let p = Point::new(rng.random_range(lo.x..=hi.x), rng.random_range(lo.y..=hi.y));
            if self.contains(p) {
                return Ok(p);
            }
        }
        Err(Error::SamplingFailure {
            attempts: MAX_POINT_DRAWS,
            constraint: "point inside the prior polygon".into(),
        })
    }

    fn sample_on_entry(&self, edge: Edge, rng: &mut RngStream) -> Point {
        let segments = self.entry_segments(edge);
        let total: f64 = segments.iter().map(|(a, b)| a.distance(*b)).sum();
        let mut u = rng.random_range(0.0..total);
        for &(a, b) in &segments {
            let len = a.distance(b);
            if u <= len {
                return a.lerp(b, u / len);
            }
            u -= len;
        }
        segments[segments.len() - 1].1
    }

    /// Illustrative default regions on a frontal chest image. They are
    /// hand-placed fixtures, not measured anatomy.
    pub fn default_for(kind: PriorKind) -> Option<Self> {
        let poly = |v: &[[f64; 2]]| v.iter().map(|&p| Point::from(p)).collect::<Vec<_>>();
        let prior = match kind {
            PriorKind::Endotracheal => Self::new(
                kind,
                poly(&[[0.44, 0.0], [0.56, 0.0], [0.55, 0.42], [0.45, 0.42]]),
                Some(Edge::Top),
            ),
            PriorKind::Cvc => Self::new(
                kind,
                poly(&[
                    [0.60, 0.10],
                    [0.85, 0.04],
                    [0.92, 0.14],
                    [0.62, 0.46],
                    [0.52, 0.40],
                ]),
                None,
            ),
            PriorKind::ChestTube => Self::new(
                kind,
                poly(&[[0.0, 0.55], [0.0, 0.85], [0.35, 0.75], [0.35, 0.48]]),
                Some(Edge::Left),
            ),
            PriorKind::Custom => return None,
        };
        Some(prior.expect("default priors are valid"))
    }
}

fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| poly[i].cross(poly[(i + 1) % n]))
        .sum::<f64>()
        / 2.0
}

fn orientation(a: Point, b: Point, c: Point) -> f64 {
    b.sub(a).cross(c.sub(a))
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    orientation(a, b, p).abs() <= EPS
        && p.x >= a.x.min(b.x) - EPS
        && p.x <= a.x.max(b.x) + EPS
        && p.y >= a.y.min(b.y) - EPS
        && p.y <= a.y.max(b.y) + EPS
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (d1, d2) = (orientation(c, d, a), orientation(c, d, b));
    let (d3, d4) = (orientation(a, b, c), orientation(a, b, d));
    if ((d1 > EPS && d2 < -EPS) || (d1 < -EPS && d2 > EPS))
        && ((d3 > EPS && d4 < -EPS) || (d3 < -EPS && d4 > EPS))
    {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

fn self_intersects(poly: &[Point]) -> bool {
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(a, b, poly[j], poly[(j + 1) % n]) {
                return true;
            }
        }
    }
    // Repeated vertices also make adjacent sides overlap.
    (0..n).any(|i| poly[i].distance(poly[(i + 1) % n]) <= EPS)
}

/// Shape parameters of one fake tube.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTubeSpec", rename_all = "kebab-case")]
pub struct TubeSpec {
    n_control_points: usize,
    width_range: (usize, usize),
    samples_per_segment: usize,
    max_turn_angle: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct RawTubeSpec {
    #[serde(default = "default_n_control_points")]
    n_control_points: usize,
    #[serde(default = "default_width_range")]
    width_range: (usize, usize),
    #[serde(default = "default_samples_per_segment")]
    samples_per_segment: usize,
    #[serde(default = "default_max_turn_angle")]
    max_turn_angle: f64,
}

fn default_n_control_points() -> usize {
    4
}

fn default_width_range() -> (usize, usize) {
    (3, 7)
}

fn default_samples_per_segment() -> usize {
    16
}

fn default_max_turn_angle() -> f64 {
    60.0
}

impl TryFrom<RawTubeSpec> for TubeSpec {
    type Error = Error;

    fn try_from(raw: RawTubeSpec) -> Result<Self> {
        TubeSpec::new(
            raw.n_control_points,
            raw.width_range,
            raw.samples_per_segment,
            raw.max_turn_angle,
        )
    }
}

impl Default for TubeSpec {
    fn default() -> Self {
        Self {
            n_control_points: default_n_control_points(),
            width_range: default_width_range(),
            samples_per_segment: default_samples_per_segment(),
            max_turn_angle: default_max_turn_angle(),
        }
    }
}

impl TubeSpec {
    /// `max_turn_angle` is in degrees.
    pub fn new(
        n_control_points: usize,
        width_range: (usize, usize),
        samples_per_segment: usize,
        max_turn_angle: f64,
    ) -> Result<Self> {
        if n_control_points < 2 {
            return Err(Error::invalid("n-control-points must be >= 2"));
        }
        let (lo, hi) = width_range;
        if lo < 1 || lo > hi {
            return Err(Error::invalid(format!(
                "width-range [{lo}, {hi}] must satisfy 1 <= w_min <= w_max"
            )));
        }
        if samples_per_segment < 2 {
            return Err(Error::invalid("samples-per-segment must be >= 2"));
        }
        if !(max_turn_angle > 0.0 && max_turn_angle <= 180.0) {
            return Err(Error::invalid(format!(
                "max-turn-angle {max_turn_angle} outside (0, 180]"
            )));
        }
        Ok(Self {
            n_control_points,
            width_range,
            samples_per_segment,
            max_turn_angle,
        })
    }

    pub fn n_control_points(&self) -> usize {
        self.n_control_points
    }

    pub fn width_range(&self) -> (usize, usize) {
        self.width_range
    }

    pub fn samples_per_segment(&self) -> usize {
        self.samples_per_segment
    }

    pub fn max_turn_angle(&self) -> f64 {
        self.max_turn_angle
    }
}

/// Ordered sub-pixel points with no two consecutive ones equal.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyline {
    points: Vec<Point>,
}

impl Polyline {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("polyline needs at least 2 points"));
        }
        if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::invalid("polyline points must be finite"));
        }
        if points.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("polyline has repeated consecutive points"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Clamps every vertex into the pixel frame of a `height` x `width`
    /// image, dropping vertices that collapse onto their predecessor. A
    /// spline that overshoots the border then runs along it instead of
    /// leaving and re-entering the image. Returns `self` unchanged when the
    /// whole line collapses to a single pixel position.
    pub fn clamped(&self, height: usize, width: usize) -> Polyline {
        let (xmax, ymax) = (
            width.saturating_sub(1) as f64,
            height.saturating_sub(1) as f64,
        );
        let mut points: Vec<Point> = Vec::with_capacity(self.points.len());
        for p in &self.points {
            let q = Point::new(p.x.clamp(0.0, xmax), p.y.clamp(0.0, ymax));
            if points.last() != Some(&q) {
                points.push(q);
            }
        }
        if points.len() < 2 {
            return self.clone();
        }
        Polyline { points }
    }
}

/// Largest turning angle, in degrees, at the interior points.
fn max_turn(points: &[Point]) -> f64 {
    points
        .windows(3)
        .map(|w| {
            let (u, v) = (w[1].sub(w[0]), w[2].sub(w[1]));
            let c = (u.dot(v) / (u.norm() * v.norm())).clamp(-1.0, 1.0);
            c.acos().to_degrees()
        })
        .fold(0.0, f64::max)
}

/// Draws control points inside the prior, ordered along its principal axis.
pub fn sample_control_points(
    prior: &LocationPrior,
    spec: &TubeSpec,
    rng: &mut RngStream,
) -> Result<Vec<Point>> {
    let axis = prior.principal_axis();
    let n = spec.n_control_points;
    for _ in 0..MAX_ATTEMPTS {
        let mut points = Vec::with_capacity(n);
        let entry = prior.entry_edge.map(|e| prior.sample_on_entry(e, rng));
        let free = n - usize::from(entry.is_some());
        let mut rest = (0..free)
            .map(|_| prior.sample_inside(rng))
            .collect::<Result<Vec<_>>>()?;
        rest.sort_by(|a, b| a.dot(axis).total_cmp(&b.dot(axis)));
        points.extend(entry);
        points.extend(rest);
        let distinct = points.windows(2).all(|w| w[0].distance(w[1]) > EPS);
        if distinct && max_turn(&points) <= spec.max_turn_angle {
            return Ok(points);
        }
    }
    Err(Error::SamplingFailure {
        attempts: MAX_ATTEMPTS,
        constraint: format!("every turn angle <= {} degrees", spec.max_turn_angle),
    })
}

/// Centripetal Catmull-Rom spline through `points`, with `samples_per_segment`
/// samples per span plus the final control point.
pub fn spline_interpolate(points: &[Point], samples_per_segment: usize) -> Result<Polyline> {
    if points.len() < 2 {
        return Err(Error::invalid("spline needs at least 2 control points"));
    }
    if samples_per_segment < 1 {
        return Err(Error::invalid("samples-per-segment must be >= 1"));
    }
    if points.windows(2).any(|w| w[0].distance(w[1]) <= EPS) {
        return Err(Error::invalid("duplicate consecutive control points"));
    }
    let n = points.len();
    let first = points[0].lerp(points[1], -1.0);
    let last = points[n - 1].lerp(points[n - 2], -1.0);
    let at = |i: isize| -> Point {
        if i < 0 {
            first
        } else if i as usize >= n {
            last
        } else {
            points[i as usize]
        }
    };

    let mut out = Vec::with_capacity((n - 1) * samples_per_segment + 1);
    for seg in 0..n - 1 {
        let i = seg as isize;
        let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
        let t0 = 0.0;
        let t1 = t0 + p0.distance(p1).sqrt();
        let t2 = t1 + p1.distance(p2).sqrt();
        let t3 = t2 + p2.distance(p3).sqrt();
        out.push(p1);
        for j in 1..samples_per_segment {
            let t = t1 + (t2 - t1) * j as f64 / samples_per_segment as f64;
            let a1 = p0.lerp(p1, (t - t0) / (t1 - t0));
            let a2 = p1.lerp(p2, (t - t1) / (t2 - t1));
            let a3 = p2.lerp(p3, (t - t2) / (t3 - t2));
            let b1 = a1.lerp(a2, (t - t0) / (t2 - t0));
            let b2 = a2.lerp(a3, (t - t1) / (t3 - t1));
            out.push(b1.lerp(b2, (t - t1) / (t2 - t1)));
        }
    }
    out.push(points[n - 1]);
    out.dedup();
    Polyline::new(out)
}

/// 8-connected one-pixel raster of the polyline, clipped to the image.
/// Point `(x, y)` lands on pixel `(row, col) = (round(y), round(x))`.
pub fn rasterize_polyline(line: &Polyline, height: usize, width: usize) -> Result<BinaryMask> {
    let mut mask = BinaryMask::empty(height, width);
    let pixel = |p: Point| (p.x.round() as i64, p.y.round() as i64);
    let mut plot = |x: i64, y: i64| {
        if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
            mask.set(y as usize, x as usize, true);
        }
    };
    for w in line.points().windows(2) {
        let (mut x0, mut y0) = pixel(w[0]);
        let (x1, y1) = pixel(w[1]);
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = ((x1 - x0).signum(), (y1 - y0).signum());
        let mut err = dx + dy;
        loop {
            plot(x0, y0);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }
    if mask.is_empty() {
        return Err(Error::EmptyMask(
            "polyline lies entirely outside the image".into(),
        ));
    }
    Ok(mask)
}

/// Provenance of one generated tube, control points in pixel coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TubeRecord {
    pub prior: PriorKind,
    pub seed: u64,
    pub stream_id: u64,
    pub control_points: Vec<Point>,
    pub radius: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FakeMask {
    pub mask: BinaryMask,
    pub tubes: Vec<TubeRecord>,
}

/// One dilated tube per `(prior, spec)` pair, unioned into a single mask.
pub fn generate_fake_mask(
    priors: &[(LocationPrior, TubeSpec)],
    height: usize,
    width: usize,
    rng: &mut RngStream,
) -> Result<FakeMask> {
    if priors.is_empty() {
        return Err(Error::invalid("need at least one location prior"));
    }
    if height == 0 || width == 0 {
        return Err(Error::invalid("mask dimensions must be positive"));
    }
    let mut mask = BinaryMask::empty(height, width);
    let mut tubes = Vec::with_capacity(priors.len());
    let sx = (width - 1) as f64;
    let sy = (height - 1) as f64;
    for (prior, spec) in priors {
        let normalized = sample_control_points(prior, spec, rng)?;
        let points: Vec<Point> = normalized
            .iter()
            .map(|p| Point::new(p.x * sx, p.y * sy))
            .collect();
        let line = spline_interpolate(&points, spec.samples_per_segment)?.clamped(height, width);
        let centerline = rasterize_polyline(&line, height, width)?;
        let (lo, hi) = spec.width_range;
        let radius = rng.random_range(lo / 2..=hi / 2);
        let tube = dilate(&centerline, radius);
        mask = mask.union(&tube)?;
        tubes.push(TubeRecord {
            prior: prior.name,
            seed: rng.seed(),
            stream_id: rng.stream_id(),
            control_points: points,
            radius,
            width: 2 * radius + 1,
        });
    }
    Ok(FakeMask { mask, tubes })
}
