//! Gradient-based in-painting of a tube into a clean image.
//!
//! A delta field `d`, zero outside the mask, is optimized so that the masked
//! mean tube-shape response of `cxr + d` approaches a target `t`:
//!
//! ```text
//! J(d) = lambda2 * (F(cxr + d, mask) - t)^2 + smoothness * TV(d)
//! ```
//!
//! with `TV` the anisotropic total variation. After every step `d` is
//! projected back onto the mask and onto the box
//! `max(-bound, -cxr) <= d <= min(bound, 1 - cxr)`, so `cxr + d` is always a
//! valid image and no clamping is needed on output.

use std::fmt;
use std::io::Write;

use rand_distr::{Distribution, StandardNormal};

use crate::conv::gaussian_blur;
use crate::error::{Error, Result};
use crate::frangi::{masked_mean_response, response_and_gradient, FrangiParams, Polarity};
use crate::grid::{BinaryMask, Grid, Image};
use crate::rng::RngStream;

/// Distribution of the mean tube-shape response of real tubes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetResponse {
    pub mu_t: f64,
    pub sigma_t: f64,
}

impl TargetResponse {
    pub fn new(mu_t: f64, sigma_t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mu_t) {
            return Err(Error::invalid(format!("mu_t {mu_t} outside [0, 1]")));
        }
        if !sigma_t.is_finite() || sigma_t < 0.0 {
            return Err(Error::invalid(format!(
                "sigma_t must be >= 0, got {sigma_t}"
            )));
        }
        Ok(Self { mu_t, sigma_t })
    }

    /// Draws `t ~ N(mu_t, sigma_t)` clipped to `[0, 1]`.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        (self.mu_t + self.sigma_t * z).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StepRule {
    /// Plain gradient steps with backtracking: the step is halved (at most
    /// 20 times) until the objective decreases, otherwise the iterate stays.
    Fixed,
    #[default]
    AdamStyle,
}

#[derive(Clone, Debug)]
pub struct InpaintConfig {
    pub frangi: FrangiParams,
    pub target: TargetResponse,
    pub lambda2: f64,
    pub smoothness_weight: f64,
    pub steps: usize,
    pub step_rule: StepRule,
    pub learning_rate: f64,
    pub momentum_decays: (f64, f64),
    pub delta_bound: f64,
    /// Amplitude of the smoothed-mask starting delta used when the clean image
    /// sits on a stationary point of the objective (e.g. a flat background).
    pub warm_start: f64,
    pub rng: RngStream,
}

impl InpaintConfig {
    pub fn new(target: TargetResponse, rng: RngStream) -> Self {
        Self {
            frangi: FrangiParams::default(),
            target,
            lambda2: 10.0,
            smoothness_weight: 0.0,
            steps: 500,
            step_rule: StepRule::AdamStyle,
            learning_rate: 2e-4,
            momentum_decays: (0.5, 0.999),
            delta_bound: 0.5,
            warm_start: 0.01,
            rng,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.frangi.validate()?;
        TargetResponse::new(self.target.mu_t, self.target.sigma_t)?;
        let nonneg = |name: &str, v: f64| {
            if !v.is_finite() || v < 0.0 {
                Err(Error::invalid(format!("{name} must be >= 0, got {v}")))
            } else {
                Ok(())
            }
        };
        nonneg("lambda2", self.lambda2)?;
        nonneg("smoothness-weight", self.smoothness_weight)?;
        nonneg("warm-start", self.warm_start)?;
        if self.steps == 0 {
            return Err(Error::invalid("steps must be > 0"));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning-rate must be > 0"));
        }
        let (b1, b2) = self.momentum_decays;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::invalid("momentum decays must lie in [0, 1)"));
        }
        if !(self.delta_bound > 0.0 && self.delta_bound <= 1.0) {
            return Err(Error::invalid("delta-bound must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Status {
    Converged,
    #[default]
    MaxSteps,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Converged => "converged",
            Status::MaxSteps => "max-steps",
        })
    }
}

/// Objective and masked mean response at every evaluated iterate (index 0 is
/// the clean image).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizationTrace {
    pub loss: Vec<f64>,
    pub response: Vec<f64>,
    pub target: f64,
    pub status: Status,
}

impl OptimizationTrace {
    pub fn len(&self) -> usize {
        self.loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss.is_empty()
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "step,loss,response")?;
        for (i, (l, r)) in self.loss.iter().zip(&self.response).enumerate() {
            writeln!(out, "{i},{l},{r}")?;
        }
        Ok(())
    }
}

fn check_mask(img: &Grid, mask: &BinaryMask) -> Result<()> {
    img.check_same_shape(mask.shape(), "mask")?;
    if mask.is_empty() {
        return Err(Error::invalid("mask is empty"));
    }
    Ok(())
}

/// `(F(img, mask) - t)^2` with `F` the masked mean tube-shape response.
pub fn tube_shape_loss(
    img: &Grid,
    mask: &BinaryMask,
    frangi: &FrangiParams,
    t: f64,
) -> Result<f64> {
    check_mask(img, mask)?;
    let f = masked_mean_response(img, mask, frangi)?;
    Ok((f - t).powi(2))
}

/// `(mean of img over mask - t_color)^2`.
pub fn intensity_loss(img: &Grid, mask: &BinaryMask, t_color: f64) -> Result<f64> {
    check_mask(img, mask)?;
    let (sum, n) = img
        .data()
        .iter()
        .zip(mask.data())
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    Ok((sum / n as f64 - t_color).powi(2))
}

/// Mean and population standard deviation of the masked mean response over
/// reference images with real tubes.
pub fn estimate_target_response(
    samples: &[(Image, BinaryMask)],
    frangi: &FrangiParams,
) -> Result<TargetResponse> {
    if samples.is_empty() {
        return Err(Error::invalid(
            "need at least one sample to estimate the target response",
        ));
    }
    let responses = samples
        .iter()
        .map(|(img, mask)| {
            check_mask(img, mask)?;
            masked_mean_response(img, mask, frangi)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = responses.len() as f64;
    let mu = responses.iter().sum::<f64>() / n;
    let var = responses.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / n;
    TargetResponse::new(mu.clamp(0.0, 1.0), var.sqrt())
}

/// Anisotropic total variation and one subgradient (sign(0) = 0).
fn total_variation(d: &Grid) -> (f64, Grid) {
    let (h, w) = d.shape();
    let mut tv = 0.0;
    let mut g = Grid::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let v = d.get(r, c);
            if c + 1 < w {
                let diff = d.get(r, c + 1) - v;
                tv += diff.abs();
                let s = sign(diff);
                g.data_mut()[r * w + c] -= s;
                g.data_mut()[r * w + c + 1] += s;
            }
            if r + 1 < h {
                let diff = d.get(r + 1, c) - v;
                tv += diff.abs();
                let s = sign(diff);
                g.data_mut()[r * w + c] -= s;
                g.data_mut()[(r + 1) * w + c] += s;
            }
        }
    }
    (tv, g)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

struct Problem<'a> {
    cxr: &'a Image,
    mask: &'a BinaryMask,
    cfg: &'a InpaintConfig,
    t: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

/// Objective value, response and masked gradient at one delta.
struct Eval {
    loss: f64,
    response: f64,
    grad: Grid,
}

impl<'a> Problem<'a> {
    fn new(cxr: &'a Image, mask: &'a BinaryMask, cfg: &'a InpaintConfig, t: f64) -> Self {
        let b = cfg.delta_bound;
        let (lo, hi) = cxr
            .data()
            .iter()
            .zip(mask.data())
            .map(|(&x, &m)| {
                if m {
                    ((-b).max(-x), b.min(1.0 - x))
                } else {
                    (0.0, 0.0)
                }
            })
            .unzip();
        Self {
            cxr,
            mask,
            cfg,
            t,
            lo,
            hi,
        }
    }

    fn project(&self, d: &mut Grid) {
        for ((v, lo), hi) in d.data_mut().iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.clamp(*lo, *hi);
        }
    }

    fn painted(&self, d: &Grid) -> Grid {
        let data = self
            .cxr
            .data()
            .iter()
            .zip(d.data())
            .map(|(x, v)| x + v)
            .collect();
        Grid::new(d.height(), d.width(), data).expect("shape")
    }

    fn evaluate(&self, d: &Grid) -> Result<Eval> {
        let x = self.painted(d);
        let (f, grad_f) = response_and_gradient(&x, self.mask, &self.cfg.frangi)?;
        let lambda2 = self.cfg.lambda2;
        let mut loss = lambda2 * (f - self.t).powi(2);
        let scale = lambda2 * 2.0 * (f - self.t);
        let mut grad = grad_f.map(|g| scale * g);
        if self.cfg.smoothness_weight > 0.0 {
            let (tv, tv_grad) = total_variation(d);
            loss += self.cfg.smoothness_weight * tv;
            for (g, t) in grad.data_mut().iter_mut().zip(tv_grad.data()) {
                *g += self.cfg.smoothness_weight * t;
            }
        }
        for (g, &m) in grad.data_mut().iter_mut().zip(self.mask.data()) {
            if !m {
                *g = 0.0;
            }
        }
        Ok(Eval {
            loss,
            response: f,
            grad,
        })
    }

    fn converged(&self, response: f64) -> bool {
        (response - self.t).abs() <= 0.05 * self.t.max(0.05)
    }

    /// Smoothed mask, peak `warm_start`, signed to brighten bright tubes and
    /// darken dark ones.
    fn warm_start(&self) -> Result<Grid> {
        let sigma = self.cfg.frangi.sigmas[0];
        let blurred = gaussian_blur(&self.mask.to_grid(), sigma)?;
        let peak = blurred
            .data()
            .iter()
            .zip(self.mask.data())
            .filter(|(_, &m)| m)
            .map(|(v, _)| *v)
            .fold(0.0, f64::max);
        let sign = match self.cfg.frangi.polarity {
            Polarity::DarkTubes => -1.0,
            Polarity::BrightTubes | Polarity::Both => 1.0,
        };
        let amp = sign * self.cfg.warm_start / peak.max(f64::MIN_POSITIVE);
        let mut d = blurred.map(|v| amp * v);
        self.project(&mut d);
        Ok(d)
    }
}

/// Largest gradient entry treated as zero when deciding to warm start.
const STATIONARY_GRADIENT: f64 = 1e-10;

/// Paints a tube into `cxr` under `mask` by minimizing the tube-shape loss.
pub fn inpaint(
    cxr: &Image,
    mask: &BinaryMask,
    cfg: &InpaintConfig,
) -> Result<(Image, OptimizationTrace)> {
    cfg.validate()?;
    check_mask(cxr, mask)?;
    let mut rng = cfg.rng.clone();
    let t = cfg.target.sample(&mut rng);
    let problem = Problem::new(cxr, mask, cfg, t);
    let (h, w) = cxr.shape();
    let mut trace = OptimizationTrace {
        target: t,
        ..Default::default()
    };

    let mut delta = Grid::zeros(h, w);
    let mut cur = problem.evaluate(&delta)?;
    let push = |trace: &mut OptimizationTrace, e: &Eval, step: usize| -> Result<()> {
        trace.loss.push(e.loss);
        trace.response.push(e.response);
        if !e.loss.is_finite() || !e.response.is_finite() {
            return Err(Error::NumericalFailure {
                step,
                trace: Box::new(trace.clone()),
            });
        }
        Ok(())
    };
    push(&mut trace, &cur, 0)?;
    if problem.converged(cur.response) {
        trace.status = Status::Converged;
        return Ok((cxr.clone(), trace));
    }

    // A flat background is a stationary point: only rounding noise survives in
    // the gradient, and Adam would amplify that noise into full-size steps.
    let grad_max = cur.grad.data().iter().fold(0.0f64, |m, g| m.max(g.abs()));
    if cur.loss > 0.0 && cfg.warm_start > 0.0 && grad_max <= STATIONARY_GRADIENT {
        let start = problem.warm_start()?;
        let e = problem.evaluate(&start)?;
        if e.loss < cur.loss {
            delta = start;
            cur = e;
        }
    }

    let (b1, b2) = cfg.momentum_decays;
    let mut m = vec![0.0; h * w];
    let mut v = vec![0.0; h * w];
    for step in 1..=cfg.steps {
        match cfg.step_rule {
            StepRule::AdamStyle => {
                let k = step as i32;
                let (c1, c2) = (1.0 - b1.powi(k), 1.0 - b2.powi(k));
                for i in 0..h * w {
                    let g = cur.grad.data()[i];
                    m[i] = b1 * m[i] + (1.0 - b1) * g;
                    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                    let update = (m[i] / c1) / ((v[i] / c2).sqrt() + 1e-8);
                    delta.data_mut()[i] -= cfg.learning_rate * update;
                }
                problem.project(&mut delta);
                cur = problem.evaluate(&delta)?;
            }
            StepRule::Fixed => {
                let mut lr = cfg.learning_rate;
                for _ in 0..=20 {
                    let mut trial = delta.clone();
                    for (d, g) in trial.data_mut().iter_mut().zip(cur.grad.data()) {
                        *d -= lr * g;
                    }
                    problem.project(&mut trial);
                    let e = problem.evaluate(&trial)?;
                    if e.loss < cur.loss {
                        delta = trial;
                        cur = e;
                        break;
                    }
                    lr *= 0.5;
                }
            }
        }
        push(&mut trace, &cur, step)?;
        if problem.converged(cur.response) {
            trace.status = Status::Converged;
            break;
        }
    }

    let painted = Image::from_grid(problem.painted(&delta))?;
    Ok((painted, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params() -> FrangiParams {
        FrangiParams {
            sigmas: vec![1.0, 2.0],
            ..FrangiParams::default()
        }
    }

    fn bar_mask(n: usize) -> BinaryMask {
        BinaryMask::from_fn(n, n, |r, c| {
            (n / 2 - 1..=n / 2 + 1).contains(&r) && (4..n - 4).contains(&c)
        })
    }

    fn config(mu: f64, steps: usize) -> InpaintConfig {
        let mut cfg =
            InpaintConfig::new(TargetResponse::new(mu, 0.0).unwrap(), RngStream::new(3, 0));
        cfg.frangi = small_params();
        cfg.steps = steps;
        cfg
    }

    #[test]
    fn tube_shape_loss_examples() {
        let img = Image::filled(24, 24, 0.4).unwrap();
        let mask = bar_mask(24);
        let p = small_params();
        assert!(tube_shape_loss(&img, &mask, &p, 0.0).unwrap().abs() < 1e-12);
        assert!((tube_shape_loss(&img, &mask, &p, 0.4).unwrap() - 0.16).abs() < 1e-9);

        let striped = Grid::from_fn(24, 24, |r, _| if r == 12 { 0.6 } else { 0.2 });
        let f = masked_mean_response(&striped, &mask, &p).unwrap();
        assert!(tube_shape_loss(&striped, &mask, &p, f).unwrap().abs() < 1e-15);
        assert!(matches!(
            tube_shape_loss(&img, &BinaryMask::empty(24, 24), &p, 0.1),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn intensity_loss_examples() {
        let mask = BinaryMask::full(4, 4);
        let img = Grid::filled(4, 4, 0.7);
        assert!(intensity_loss(&img, &mask, 0.7).unwrap().abs() < 1e-15);
        let img = Grid::filled(4, 4, 0.2);
        assert!((intensity_loss(&img, &mask, 0.7).unwrap() - 0.25).abs() < 1e-12);
        let half = Grid::from_fn(4, 4, |r, _| if r < 2 { 0.0 } else { 1.0 });
        assert!(intensity_loss(&half, &mask, 0.5).unwrap().abs() < 1e-15);
        assert!(intensity_loss(&half, &BinaryMask::empty(4, 4), 0.5).is_err());
    }

    #[test]
    fn target_estimation() {
        let p = small_params();
        let mask = bar_mask(24);
        let a = Image::from_grid(Grid::from_fn(
            24,
            24,
            |r, _| if r == 12 { 0.25 } else { 0.2 },
        ))
        .unwrap();
        let b = Image::from_grid(Grid::from_fn(
            24,
            24,
            |r, _| if r == 12 { 0.21 } else { 0.2 },
        ))
        .unwrap();
        let ra = masked_mean_response(&a, &mask, &p).unwrap();
        let rb = masked_mean_response(&b, &mask, &p).unwrap();

        let one = estimate_target_response(&[(a.clone(), mask.clone())], &p).unwrap();
        assert_eq!((one.mu_t, one.sigma_t), (ra, 0.0));

        let two =
            estimate_target_response(&[(a.clone(), mask.clone()), (b, mask.clone())], &p).unwrap();
        assert!((two.mu_t - (ra + rb) / 2.0).abs() < 1e-12);
        assert!((two.sigma_t - (ra - rb).abs() / 2.0).abs() < 1e-12);

        let same = vec![(a, mask); 4];
        assert_eq!(estimate_target_response(&same, &p).unwrap().sigma_t, 0.0);
        assert!(estimate_target_response(&[], &p).is_err());
    }

    #[test]
    fn target_sampling_is_clipped() {
        let t = TargetResponse::new(0.95, 2.0).unwrap();
        let mut rng = RngStream::new(0, 0);
        for _ in 0..200 {
            let v = t.sample(&mut rng);
            assert!((0.0..=1.0).contains(&v));
        }
        assert!(TargetResponse::new(1.2, 0.0).is_err());
        assert!(TargetResponse::new(0.2, -0.1).is_err());
    }

    #[test]
    fn converges_immediately_on_own_response() {
        let img = Image::from_grid(Grid::from_fn(
            24,
            24,
            |r, _| if r == 12 { 0.3 } else { 0.2 },
        ))
        .unwrap();
        let mask = bar_mask(24);
        let f = masked_mean_response(&img, &mask, &small_params()).unwrap();
        let cfg = config(f, 50);
        let (out, trace) = inpaint(&img, &mask, &cfg).unwrap();
        assert_eq!(trace.status, Status::Converged);
        assert_eq!(trace.len(), 1);
        assert_eq!(out, img);
    }

    #[test]
    fn zero_weight_leaves_image_untouched() {
        let img = Image::from_grid(Grid::from_fn(24, 24, |r, c| {
            0.3 + 0.01 * ((r * c) % 5) as f64
        }))
        .unwrap();
        let mask = bar_mask(24);
        let mut cfg = config(0.8, 20);
        cfg.lambda2 = 0.0;
        let (out, trace) = inpaint(&img, &mask, &cfg).unwrap();
        assert_eq!(out, img);
        assert_eq!(trace.status, Status::MaxSteps);
        assert_eq!(trace.len(), 21);
    }

    #[test]
    fn fixed_rule_loss_is_monotone_and_confined() {
        let img = Image::from_grid(Grid::from_fn(24, 24, |r, c| {
            0.3 + 0.002 * ((r + 2 * c) % 7) as f64
        }))
        .unwrap();
        let mask = bar_mask(24);
        let mut cfg = config(0.6, 25);
        cfg.step_rule = StepRule::Fixed;
        cfg.learning_rate = 1e-3;
        cfg.smoothness_weight = 1e-3;
        let (out, trace) = inpaint(&img, &mask, &cfg).unwrap();
        for w in trace.loss.windows(2) {
            assert!(w[1] <= w[0], "loss increased: {} -> {}", w[0], w[1]);
        }
        for ((o, i), &m) in out.data().iter().zip(img.data()).zip(mask.data()) {
            assert!((0.0..=1.0).contains(o));
            if m {
                assert!((o - i).abs() <= cfg.delta_bound + 1e-15);
            } else {
                assert_eq!(o, i);
            }
        }
    }

    #[test]
    fn adam_paints_flat_background() {
        let img = Image::filled(32, 32, 0.3).unwrap();
        let mask = bar_mask(32);
        let cfg = config(0.5, 200);
        let (out, trace) = inpaint(&img, &mask, &cfg).unwrap();
        assert!(trace.loss.last().unwrap() < &trace.loss[0]);
        assert!(trace.response.last().unwrap() > &trace.response[0]);
        for (o, &m) in out.data().iter().zip(mask.data()) {
            if !m {
                assert_eq!(*o, 0.3);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let img = Image::filled(24, 24, 0.4).unwrap();
        let mask = bar_mask(24);
        let mut cfg = config(0.5, 15);
        cfg.target.sigma_t = 0.1;
        let a = inpaint(&img, &mask, &cfg).unwrap();
        let b = inpaint(&img, &mask, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        let mut cfg = config(0.5, 10);
        assert!(cfg.validate().is_ok());
        cfg.steps = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = config(0.5, 10);
        cfg.delta_bound = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = config(0.5, 10);
        cfg.learning_rate = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn csv_export() {
        let trace = OptimizationTrace {
            loss: vec![1.0, 0.5],
            response: vec![0.0, 0.25],
            target: 0.5,
            status: Status::MaxSteps,
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "step,loss,response\n0,1,0\n1,0.5,0.25\n"
        );
    }

    #[test]
    fn total_variation_of_step() {
        let d = Grid::from_fn(3, 3, |_, c| if c == 2 { 1.0 } else { 0.0 });
        let (tv, g) = total_variation(&d);
        assert_eq!(tv, 3.0);
        assert_eq!(g.get(1, 1), -1.0);
        assert_eq!(g.get(1, 2), 1.0);
    }
}
