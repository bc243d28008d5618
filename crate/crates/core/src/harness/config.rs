//! Experiment documents: one JSON object per experiment, parsed strictly.
//!
//! ```json
//! {
//!   "fusion": { "model_g": {"kind": "builtin", "name": "two_region_general"},
//!               "model_e": {"kind": "builtin", "name": "two_region_expert"},
//!               "c_g": "scene", "c_e": "object" },
//!   "seeds": 4,
//!   "sweep": [ {"param": "k_g", "values": [1, 10, 100]} ],
//!   "out_dir": "runs/demo",
//!   "metrics": ["moments", "kl", "coverage", "stability"],
//!   "target": {"model": {"kind": "builtin", "name": "two_region_target"}, "condition": "composite"},
//!   "dump_every": 0
//! }
//! ```
//!
//! Sweep `param`s are dotted paths into `fusion` (`k_g`, `salience.blur`,
//! `blend`, `schedule.steps`, ...). Every point of the Cartesian product of
//! the axes runs once per seed; run `i` of a point uses `fusion.seed + i`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{FuseError, Result};
use crate::sampler::{BlendSpec, FusionConfig, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Moments,
    Kl,
    Coverage,
    Stability,
}

pub const ALL_METRICS: [Metric; 4] = [Metric::Moments, Metric::Kl, Metric::Coverage, Metric::Stability];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub param: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub model: ModelSpec,
    pub condition: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub fusion: FusionConfig,
    #[serde(default = "one")]
    pub seeds: usize,
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    /// Analytic scene the final samples are scored against. Defaults to the
    /// sampled model (`model_e`/`c_e` for `single_e`, else `model_g`/`c_g`).
    #[serde(default)]
    pub target: Option<TargetSpec>,
    /// Write `step_<t>/` directories every this many steps; 0 disables.
    #[serde(default)]
    pub dump_every: usize,
}

fn one() -> usize {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("runs")
}
fn default_metrics() -> Vec<Metric> {
    ALL_METRICS.to_vec()
}

/// One concrete run of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub id: String,
    pub point: usize,
    pub seed: u64,
    pub overrides: Vec<(String, Value)>,
    pub fusion: FusionConfig,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)
            .map_err(|e| FuseError::Config(format!("line {} column {}: {e}", e.line(), e.column())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(FuseError::Config("seeds: must be at least 1".into()));
        }
        if self.metrics.is_empty() {
            return Err(FuseError::Config("metrics: select at least one metric".into()));
        }
        self.fusion.validate("fusion.")?;
        for (i, axis) in self.sweep.iter().enumerate() {
            if axis.values.is_empty() {
                return Err(FuseError::Config(format!(
                    "sweep[{i}].values: empty value list for `{}`",
                    axis.param
                )));
            }
            if self.sweep[..i].iter().any(|a| a.param == axis.param) {
                return Err(FuseError::Config(format!(
                    "sweep[{i}].param: `{}` swept twice",
                    axis.param
                )));
            }
            for v in &axis.values {
                apply_override(&self.fusion, &axis.param, v)
                    .map_err(|e| FuseError::Config(format!("sweep[{i}] `{}`: {e}", axis.param)))?;
            }
        }
        Ok(())
    }

    /// Number of sweep points (1 with no axes).
    pub fn points(&self) -> usize {
        self.sweep.iter().map(|a| a.values.len()).product()
    }

    /// Every `(sweep point, seed)` run. With `sweep = false` the axes are
    /// ignored and only the base config runs.
    pub fn plan(&self, sweep: bool) -> Result<Vec<RunPlan>> {
        let axes: &[SweepAxis] = if sweep { &self.sweep } else { &[] };
        let mut points: Vec<Vec<(String, Value)>> = vec![Vec::new()];
        for axis in axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |v| {
                        let mut p = p.clone();
                        p.push((axis.param.clone(), v.clone()));
                        p
                    })
                })
                .collect();
        }
        let mut runs = Vec::with_capacity(points.len() * self.seeds);
        for (point, overrides) in points.into_iter().enumerate() {
            let mut fusion = self.fusion.clone();
            for (param, value) in &overrides {
                fusion = apply_override(&fusion, param, value)?;
            }
            for i in 0..self.seeds {
                let mut f = fusion.clone();
                f.seed = self.fusion.seed.wrapping_add(i as u64);
                runs.push(RunPlan {
                    id: format!("run_{point:03}_seed_{}", f.seed),
                    point,
                    seed: f.seed,
                    overrides: overrides.clone(),
                    fusion: f,
                });
            }
        }
        Ok(runs)
    }

    /// Scene used for scoring, with its condition.
    pub fn target(&self) -> (ModelSpec, String) {
        if let Some(t) = &self.target {
            return (t.model.clone(), t.condition.clone());
        }
        match self.fusion.blend {
            BlendSpec::SingleE => (self.fusion.model_e().clone(), self.fusion.c_e().to_string()),
            _ => (self.fusion.model_g.clone(), self.fusion.c_g.clone()),
        }
    }
}

/// Replaces the field at dotted `path` of `base` with `value`.
pub fn apply_override(base: &FusionConfig, path: &str, value: &Value) -> Result<FusionConfig> {
    let mut doc = serde_json::to_value(base).expect("config serializes");
    let mut slot = &mut doc;
    for part in path.split('.') {
        slot = slot
            .as_object_mut()
            .and_then(|o| o.get_mut(part))
            .ok_or_else(|| FuseError::Config(format!("`{path}` is not a fusion config field")))?;
    }
    *slot = value.clone();
    let cfg: FusionConfig =
        serde_json::from_value(doc).map_err(|e| FuseError::Config(format!("`{path}` = {value}: {e}")))?;
    cfg.validate(&format!("{path} -> fusion."))?;
    Ok(cfg)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| FuseError::io(path, e))?;
    ExperimentSpec::from_json(&text)
}
