//! TOML run configuration. Every table rejects unknown keys.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use tubegen::frangi::FrangiParams;
use tubegen::io::{load_image, load_mask};
use tubegen::maskgen::{Edge, LocationPrior, Point, PriorKind, TubeSpec};
use tubegen::optimize::{estimate_target_response, InpaintConfig, StepRule, TargetResponse};
use tubegen::render::{HandDrawnStyle, SmoothedMaskParams};
use tubegen::RngStream;

use crate::error::CliError;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub image: ImageSize,
    pub tubes: Vec<TubeEntry>,
    pub frangi: FrangiParams,
    pub render: RenderSection,
    pub inpaint: Option<InpaintSection>,
    pub eval: EvalSection,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageSize {
    pub height: usize,
    pub width: usize,
}

impl Default for ImageSize {
    fn default() -> Self {
        Self {
            height: 512,
            width: 512,
        }
    }
}

/// One tube per generated mask: a location prior (a built-in region, or a
/// custom polygon) plus the shape of the tube drawn inside it.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TubeEntry {
    pub prior: PriorKind,
    pub polygon: Option<Vec<Point>>,
    pub entry_edge: Option<Edge>,
    pub n_control_points: Option<usize>,
    pub width_range: Option<(usize, usize)>,
    pub samples_per_segment: Option<usize>,
    pub max_turn_angle: Option<f64>,
}

impl TubeEntry {
    fn resolve(&self) -> Result<(LocationPrior, TubeSpec), CliError> {
        let prior = match (&self.polygon, LocationPrior::default_for(self.prior)) {
            (Some(poly), _) => LocationPrior::new(self.prior, poly.clone(), self.entry_edge),
            (None, Some(builtin)) if self.entry_edge.is_none() => Ok(builtin),
            (None, Some(builtin)) => {
                LocationPrior::new(self.prior, builtin.polygon().to_vec(), self.entry_edge)
            }
            (None, None) => {
                return Err(CliError::Config(format!(
                    "prior \"{}\" needs a polygon",
                    self.prior.as_str()
                )))
            }
        }
        .map_err(|e| CliError::Config(format!("prior \"{}\": {e}", self.prior.as_str())))?;
        let d = TubeSpec::default();
        let spec = TubeSpec::new(
            self.n_control_points.unwrap_or(d.n_control_points()),
            self.width_range.unwrap_or(d.width_range()),
            self.samples_per_segment.unwrap_or(d.samples_per_segment()),
            self.max_turn_angle.unwrap_or(d.max_turn_angle()),
        )
        .map_err(|e| CliError::Config(format!("tube \"{}\": {e}", self.prior.as_str())))?;
        Ok((prior, spec))
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RenderSection {
    pub smoothed: SmoothedMaskParams,
    pub hand_drawn: HandDrawnStyle,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRuleName {
    Fixed,
    #[default]
    AdamStyle,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct InpaintSection {
    pub lambda2: f64,
    pub smoothness_weight: f64,
    pub steps: usize,
    pub step_rule: StepRuleName,
    pub learning_rate: f64,
    pub momentum_decays: (f64, f64),
    pub delta_bound: f64,
    pub warm_start: f64,
    pub target: Option<TargetSection>,
}

impl Default for InpaintSection {
    fn default() -> Self {
        let d = InpaintConfig::new(
            TargetResponse {
                mu_t: 0.0,
                sigma_t: 0.0,
            },
            RngStream::new(0, 0),
        );
        Self {
            lambda2: d.lambda2,
            smoothness_weight: d.smoothness_weight,
            steps: d.steps,
            step_rule: StepRuleName::AdamStyle,
            learning_rate: d.learning_rate,
            momentum_decays: d.momentum_decays,
            delta_bound: d.delta_bound,
            warm_start: d.warm_start,
            target: None,
        }
    }
}

/// Either explicit `mu-t`/`sigma-t`, or `estimate-from` pairs of images with
/// real tubes and their masks.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TargetSection {
    pub mu_t: Option<f64>,
    pub sigma_t: Option<f64>,
    pub estimate_from: Option<Vec<SamplePaths>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplePaths {
    pub image: PathBuf,
    pub mask: PathBuf,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub threshold: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { threshold: 0.5 }
    }
}

impl RunConfig {
    /// Reads and validates a config file; `None` gives the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let cfg: RunConfig = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |what: &str, e: tubegen::Error| CliError::Config(format!("{what}: {e}"));
        if self.image.height < 2 || self.image.width < 2 {
            return Err(CliError::Config(
                "image height and width must be >= 2".into(),
            ));
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be >= 1".into()));
        }
        self.frangi.validate().map_err(|e| bad("frangi", e))?;
        self.render
            .smoothed
            .validate()
            .map_err(|e| bad("render.smoothed", e))?;
        self.render
            .hand_drawn
            .validate()
            .map_err(|e| bad("render.hand-drawn", e))?;
        self.priors()?;
        if !(0.0..=1.0).contains(&self.eval.threshold) {
            return Err(CliError::Config(format!(
                "eval.threshold {} outside [0, 1]",
                self.eval.threshold
            )));
        }
        if let Some(section) = &self.inpaint {
            let probe = self.inpaint_template(
                section,
                TargetResponse {
                    mu_t: 0.0,
                    sigma_t: 0.0,
                },
                0,
            );
            probe.validate().map_err(|e| bad("inpaint", e))?;
        }
        Ok(())
    }

    /// Resolved `(prior, spec)` pairs. Without `[[tubes]]` entries a single
    /// central venous catheter is drawn.
    pub fn priors(&self) -> Result<Vec<(LocationPrior, TubeSpec)>, CliError> {
        if self.tubes.is_empty() {
            let prior = LocationPrior::default_for(PriorKind::Cvc).expect("built-in prior");
            return Ok(vec![(prior, TubeSpec::default())]);
        }
        self.tubes.iter().map(TubeEntry::resolve).collect()
    }

    fn inpaint_template(
        &self,
        s: &InpaintSection,
        target: TargetResponse,
        seed: u64,
    ) -> InpaintConfig {
        let mut cfg = InpaintConfig::new(target, RngStream::new(seed, 0));
        cfg.frangi = self.frangi.clone();
        cfg.lambda2 = s.lambda2;
        cfg.smoothness_weight = s.smoothness_weight;
        cfg.steps = s.steps;
        cfg.step_rule = match s.step_rule {
            StepRuleName::Fixed => StepRule::Fixed,
            StepRuleName::AdamStyle => StepRule::AdamStyle,
        };
        cfg.learning_rate = s.learning_rate;
        cfg.momentum_decays = s.momentum_decays;
        cfg.delta_bound = s.delta_bound;
        cfg.warm_start = s.warm_start;
        cfg
    }

    /// In-painting settings with a resolved target response. The target block
    /// is mandatory; estimating it reads the listed samples.
    pub fn inpaint_config(&self, seed: u64) -> Result<InpaintConfig, CliError> {
        let missing =
            || CliError::Config("method inpaint requires an [inpaint.target] block".into());
        let section = self.inpaint.as_ref().ok_or_else(missing)?;
        let target = section.target.as_ref().ok_or_else(missing)?;
        let target = match (target.mu_t, target.sigma_t, &target.estimate_from) {
            (Some(mu), sigma, None) => TargetResponse::new(mu, sigma.unwrap_or(0.0))
                .map_err(|e| CliError::Config(format!("inpaint.target: {e}")))?,
            (None, None, Some(paths)) => {
                let mut samples = Vec::with_capacity(paths.len());
                for p in paths {
                    samples.push((load_image(&p.image)?, load_mask(&p.mask)?));
                }
                estimate_target_response(&samples, &self.frangi)
                    .map_err(|e| CliError::Config(format!("inpaint.target.estimate-from: {e}")))?
            }
            _ => {
                return Err(CliError::Config(
                    "inpaint.target needs either mu-t (and optionally sigma-t) or estimate-from"
                        .into(),
                ))
            }
        };
        Ok(self.inpaint_template(section, target, seed))
    }
}
