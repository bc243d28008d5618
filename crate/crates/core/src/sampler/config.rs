use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{BlendMode, Sampler, SnbParams, DEFAULT_TEMPERATURE};
use crate::error::{FuseError, Result};
use crate::fixtures;
use crate::grid::io::read_csv;
use crate::grid::{BlendMask, BlurKernel};
use crate::guidance::{ChannelAgg, GuidanceParams, SalienceParams, DEFAULT_GUIDANCE_SCALE};
use crate::predictor::{Condition, GaussianSceneModel, NoisePredictor, TabulatedPredictor};
use crate::schedule::{Schedule, ScheduleKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default)]
    pub kind: ScheduleKind,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Linear,
            steps: default_steps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SalienceSpec {
    #[serde(default = "yes")]
    pub blur: bool,
    #[serde(default = "default_radius")]
    pub radius: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub channel_agg: ChannelAgg,
}

impl Default for SalienceSpec {
    fn default() -> Self {
        Self {
            blur: true,
            radius: default_radius(),
            sigma: default_sigma(),
            channel_agg: ChannelAgg::Mean,
        }
    }
}

impl SalienceSpec {
    pub fn params(&self) -> Result<SalienceParams> {
        Ok(SalienceParams {
            blur: if self.blur {
                Some(BlurKernel::gaussian(self.radius, self.sigma)?)
            } else {
                None
            },
            channel_agg: self.channel_agg,
        })
    }
}

/// Where a noise predictor comes from. Paths are relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// JSON Gaussian scene document.
    Scene { path: PathBuf },
    /// Tabulated affine predictor file.
    Tabulated { path: PathBuf },
    /// One of the scenes compiled into the crate (see [`fixtures::BUILTIN_SCENES`]).
    Builtin { name: String },
}

impl ModelSpec {
    pub fn load(&self, base_dir: &Path) -> Result<Arc<dyn NoisePredictor>> {
        Ok(match self {
            ModelSpec::Scene { path } => Arc::new(GaussianSceneModel::load(base_dir.join(path))?),
            ModelSpec::Tabulated { path } => Arc::new(TabulatedPredictor::load(base_dir.join(path))?),
            ModelSpec::Builtin { name } => Arc::new(fixtures::builtin(name)?),
        })
    }

    /// The analytic scene behind this spec, if it is one.
    pub fn load_scene(&self, base_dir: &Path) -> Result<GaussianSceneModel> {
        match self {
            ModelSpec::Scene { path } => GaussianSceneModel::load(base_dir.join(path)),
            ModelSpec::Builtin { name } => fixtures::builtin(name),
            ModelSpec::Tabulated { .. } => Err(FuseError::param("tabulated predictors have no analytic target")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BlendSpec {
    #[default]
    Snb,
    WeightedSum {
        w: f64,
    },
    /// Single-channel CSV grid of 0/1 values.
    FixedMask {
        path: PathBuf,
    },
    SingleG,
    SingleE,
}

impl BlendSpec {
    pub fn name(&self) -> &'static str {
        match self {
            BlendSpec::Snb => "snb",
            BlendSpec::WeightedSum { .. } => "weighted_sum",
            BlendSpec::FixedMask { .. } => "fixed_mask",
            BlendSpec::SingleG => "single_g",
            BlendSpec::SingleE => "single_e",
        }
    }
}

/// Serializable description of one fusion run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default = "default_guidance")]
    pub guidance_scale: f64,
    /// Separate scale for the expert model; defaults to `guidance_scale`.
    #[serde(default)]
    pub guidance_scale_e: Option<f64>,
    #[serde(default = "default_temperature")]
    pub k_g: f64,
    #[serde(default = "default_temperature")]
    pub k_e: f64,
    #[serde(default)]
    pub salience: SalienceSpec,
    pub model_g: ModelSpec,
    /// Defaults to `model_g`.
    #[serde(default)]
    pub model_e: Option<ModelSpec>,
    pub c_g: String,
    /// Defaults to `c_g`.
    #[serde(default)]
    pub c_e: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub blend: BlendSpec,
    #[serde(default)]
    pub diagnostics: bool,
}

fn default_steps() -> usize {
    1000
}
fn default_radius() -> usize {
    BlurKernel::DEFAULT_RADIUS
}
fn default_sigma() -> f64 {
    BlurKernel::DEFAULT_SIGMA
}
fn default_guidance() -> f64 {
    DEFAULT_GUIDANCE_SCALE
}
fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}
fn yes() -> bool {
    true
}

impl FusionConfig {
    pub fn new(model_g: ModelSpec, c_g: impl Into<String>) -> Self {
        Self {
            schedule: ScheduleSpec::default(),
            guidance_scale: DEFAULT_GUIDANCE_SCALE,
            guidance_scale_e: None,
            k_g: DEFAULT_TEMPERATURE,
            k_e: DEFAULT_TEMPERATURE,
            salience: SalienceSpec::default(),
            model_g,
            model_e: None,
            c_g: c_g.into(),
            c_e: None,
            seed: 0,
            blend: BlendSpec::Snb,
            diagnostics: false,
        }
    }

    pub fn model_e(&self) -> &ModelSpec {
        self.model_e.as_ref().unwrap_or(&self.model_g)
    }

    pub fn c_e(&self) -> &str {
        self.c_e.as_deref().unwrap_or(&self.c_g)
    }

    /// Range checks that need no file access. Errors name the offending key
    /// under `prefix`.
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let bad = |key: &str, msg: String| Err(FuseError::Config(format!("{prefix}{key}: {msg}")));
        if self.schedule.steps == 0 {
            return bad("schedule.steps", "must be at least 1".into());
        }
        for (key, s) in [
            ("guidance_scale", Some(self.guidance_scale)),
            ("guidance_scale_e", self.guidance_scale_e),
        ] {
            if let Some(s) = s {
                if GuidanceParams::new(s).is_err() {
                    return bad(key, format!("must be finite and >= 0, got {s}"));
                }
            }
        }
        for (key, k) in [("k_g", self.k_g), ("k_e", self.k_e)] {
            if !k.is_finite() {
                return bad(key, format!("must be finite, got {k}"));
            }
        }
        if !(self.salience.sigma.is_finite() && self.salience.sigma > 0.0) {
            return bad(
                "salience.sigma",
                format!("must be positive, got {}", self.salience.sigma),
            );
        }
        if let BlendSpec::WeightedSum { w } = self.blend {
            if !(0.0..=1.0).contains(&w) {
                return bad("blend.w", format!("weighted_sum weight {w} outside [0, 1]"));
            }
        }
        for (key, c) in [("c_g", Some(self.c_g.as_str())), ("c_e", self.c_e.as_deref())] {
            if c.is_some_and(|c| c.is_empty() || c.contains(char::is_whitespace)) {
                return bad(key, "condition ids must be non-empty tokens".into());
            }
        }
        Ok(())
    }

    pub fn blend_mode(&self, base_dir: &Path) -> Result<BlendMode> {
        Ok(match &self.blend {
            BlendSpec::Snb => BlendMode::Snb,
            BlendSpec::WeightedSum { w } => BlendMode::WeightedSum(*w),
            BlendSpec::FixedMask { path } => {
                BlendMode::FixedMask(BlendMask::from_grid(&read_csv(base_dir.join(path))?)?)
            }
            BlendSpec::SingleG => BlendMode::SingleG,
            BlendSpec::SingleE => BlendMode::SingleE,
        })
    }

    pub fn snb_params(&self) -> Result<SnbParams> {
        let guidance_g = GuidanceParams::new(self.guidance_scale)?;
        let guidance_e = match self.guidance_scale_e {
            Some(s) => GuidanceParams::new(s)?,
            None => guidance_g,
        };
        Ok(SnbParams {
            cond_g: Condition::new(&self.c_g),
            cond_e: Condition::new(self.c_e()),
            guidance_g,
            guidance_e,
            k_g: self.k_g,
            k_e: self.k_e,
            salience: self.salience.params()?,
        })
    }

    /// Loads models and the mask and assembles a [`Sampler`].
    pub fn build(&self, base_dir: &Path) -> Result<Sampler> {
        self.validate("")?;
        let schedule = Schedule::new(self.schedule.kind, self.schedule.steps)?;
        let model_g = self.model_g.load(base_dir)?;
        let model_e = match &self.model_e {
            Some(spec) => spec.load(base_dir)?,
            None => model_g.clone(),
        };
        Sampler::new(
            schedule,
            model_g,
            model_e,
            self.snb_params()?,
            self.blend_mode(base_dir)?,
        )
    }
}
