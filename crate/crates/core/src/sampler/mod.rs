//! Saliency-aware noise blending inside a deterministic DDIM loop, plus the
//! single-model, weighted-sum and fixed-mask baselines.
//!
//! Each step both models see the same (blended) `x_t`. For each model the
//! conditional and unconditional noises give a salience map; the two maps
//! are softmax-normalized with their own temperatures and compared pixel by
//! pixel. The resulting binary mask picks, per pixel, which model's guided
//! noise drives the update to `x_{t-1}`.

mod blend;
mod config;
mod trajectory;

use std::sync::Arc;

pub use blend::{fixed_mask_blend, mask_blend, weighted_sum_blend};
pub use config::{BlendSpec, FusionConfig, ModelSpec, SalienceSpec, ScheduleSpec};
pub use trajectory::{Trajectory, TrajectoryState};

use crate::error::{FuseError, Result};
use crate::grid::{argmax_mask, spatial_softmax, BlendMask, Grid, SalienceMap};
use crate::guidance::{cfg, salience, GuidanceParams, SalienceParams};
use crate::predictor::{Condition, NoisePredictor};
use crate::rng;
use crate::schedule::Schedule;

pub const DEFAULT_TEMPERATURE: f64 = 100.0;

/// One deterministic update `x_t -> x_{t-1}` from the predicted noise.
pub fn ddim_step(x_t: &Grid, eps_hat: &Grid, schedule: &Schedule, t: usize) -> Result<Grid> {
    if t == 0 || t > schedule.steps() {
        return Err(FuseError::param(format!(
            "ddim step at t={t} outside 1..={}",
            schedule.steps()
        )));
    }
    let ab_t = schedule.alpha_bar_at(t)?;
    let ab_prev = schedule.alpha_bar_at(t - 1)?;
    let (sqrt_ab_t, sqrt_om_t) = (ab_t.sqrt(), (1.0 - ab_t).sqrt());
    let (sqrt_ab_prev, sqrt_om_prev) = (ab_prev.sqrt(), (1.0 - ab_prev).sqrt());
    x_t.zip_with(eps_hat, "ddim_step", |x, e| {
        sqrt_ab_prev * ((x - sqrt_om_t * e) / sqrt_ab_t) + sqrt_om_prev * e
    })
}

/// Parameters shared by every blending step.
#[derive(Debug, Clone, PartialEq)]
pub struct SnbParams {
    pub cond_g: Condition,
    pub cond_e: Condition,
    pub guidance_g: GuidanceParams,
    pub guidance_e: GuidanceParams,
    pub k_g: f64,
    pub k_e: f64,
    pub salience: SalienceParams,
}

impl SnbParams {
    pub fn new(cond_g: impl Into<Condition>, cond_e: impl Into<Condition>) -> Self {
        Self {
            cond_g: cond_g.into(),
            cond_e: cond_e.into(),
            guidance_g: GuidanceParams::default(),
            guidance_e: GuidanceParams::default(),
            k_g: DEFAULT_TEMPERATURE,
            k_e: DEFAULT_TEMPERATURE,
            salience: SalienceParams::default(),
        }
    }

    pub fn with_guidance(mut self, scale: f64) -> Result<Self> {
        self.guidance_g = GuidanceParams::new(scale)?;
        self.guidance_e = self.guidance_g;
        Ok(self)
    }

    pub fn with_temperatures(mut self, k_g: f64, k_e: f64) -> Self {
        self.k_g = k_g;
        self.k_e = k_e;
        self
    }

    pub fn with_salience(mut self, salience: SalienceParams) -> Self {
        self.salience = salience;
        self
    }

    fn validate(&self) -> Result<()> {
        for (name, k) in [("k_g", self.k_g), ("k_e", self.k_e)] {
            if !k.is_finite() {
                return Err(FuseError::param(format!("{name} must be finite, got {k}")));
            }
        }
        Ok(())
    }
}

/// Normalized salience maps and the mask used at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub salience_g: Option<SalienceMap>,
    pub salience_e: Option<SalienceMap>,
    pub mask: BlendMask,
}

struct Guided {
    eps_hat: Grid,
    map: SalienceMap,
}

fn guided(
    model: &dyn NoisePredictor,
    x_t: &Grid,
    schedule: &Schedule,
    t: usize,
    cond: &Condition,
    guidance: GuidanceParams,
    sal: Option<&SalienceParams>,
) -> Result<(Grid, Option<SalienceMap>)> {
    let step = schedule.step(t)?;
    let eps_c = model.predict_noise(x_t, step, cond)?;
    let eps_u = model.predict_noise(x_t, step, &Condition::null())?;
    let map = sal.map(|p| salience(&eps_c, &eps_u, p)).transpose()?;
    Ok((cfg(&eps_c, &eps_u, guidance)?, map))
}

fn guided_with_map(
    model: &dyn NoisePredictor,
    x_t: &Grid,
    schedule: &Schedule,
    t: usize,
    cond: &Condition,
    guidance: GuidanceParams,
    sal: &SalienceParams,
) -> Result<Guided> {
    let (eps_hat, map) = guided(model, x_t, schedule, t, cond, guidance, Some(sal))?;
    Ok(Guided {
        eps_hat,
        map: map.expect("salience requested"),
    })
}

/// One blending step: salience, softmax, mask, guided noises, blend, DDIM.
pub fn snb_step(
    x_t: &Grid,
    t: usize,
    model_g: &dyn NoisePredictor,
    model_e: &dyn NoisePredictor,
    params: &SnbParams,
    schedule: &Schedule,
) -> Result<(Grid, StepDiagnostics)> {
    let g = guided_with_map(
        model_g,
        x_t,
        schedule,
        t,
        &params.cond_g,
        params.guidance_g,
        &params.salience,
    )?;
    let e = guided_with_map(
        model_e,
        x_t,
        schedule,
        t,
        &params.cond_e,
        params.guidance_e,
        &params.salience,
    )?;
    let norm_g = spatial_softmax(&g.map, params.k_g);
    let norm_e = spatial_softmax(&e.map, params.k_e);
    let mask = argmax_mask(&norm_g, &norm_e)?;
    let eps = mask_blend(&g.eps_hat, &e.eps_hat, &mask)?;
    let next = ddim_step(x_t, &eps, schedule, t)?;
    Ok((
        next,
        StepDiagnostics {
            salience_g: Some(norm_g),
            salience_e: Some(norm_e),
            mask,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlendMode {
    Snb,
    WeightedSum(f64),
    FixedMask(BlendMask),
    SingleG,
    SingleE,
}

impl BlendMode {
    pub fn name(&self) -> &'static str {
        match self {
            BlendMode::Snb => "snb",
            BlendMode::WeightedSum(_) => "weighted_sum",
            BlendMode::FixedMask(_) => "fixed_mask",
            BlendMode::SingleG => "single_g",
            BlendMode::SingleE => "single_e",
        }
    }
}

/// A fully resolved sampler: schedule, both models and the blend mode.
#[derive(Debug, Clone)]
pub struct Sampler {
    schedule: Schedule,
    model_g: Arc<dyn NoisePredictor>,
    model_e: Arc<dyn NoisePredictor>,
    params: SnbParams,
    mode: BlendMode,
}

impl Sampler {
    pub fn new(
        schedule: Schedule,
        model_g: Arc<dyn NoisePredictor>,
        model_e: Arc<dyn NoisePredictor>,
        params: SnbParams,
        mode: BlendMode,
    ) -> Result<Self> {
        params.validate()?;
        let uses_g = mode != BlendMode::SingleE;
        let uses_e = mode != BlendMode::SingleG;
        if uses_g && uses_e && model_g.shape() != model_e.shape() {
            return Err(FuseError::Dimension {
                op: "Sampler::new",
                left: model_g.shape(),
                right: model_e.shape(),
            });
        }
        if uses_g && !model_g.accepts(&params.cond_g) {
            return Err(FuseError::Condition(params.cond_g.to_string()));
        }
        if uses_e && !model_e.accepts(&params.cond_e) {
            return Err(FuseError::Condition(params.cond_e.to_string()));
        }
        match &mode {
            BlendMode::WeightedSum(w) if !(0.0..=1.0).contains(w) => {
                return Err(FuseError::param(format!("weighted_sum weight {w} outside [0, 1]")));
            }
            BlendMode::FixedMask(m) => {
                let s = model_g.shape();
                if (m.height(), m.width()) != (s.height, s.width) {
                    return Err(FuseError::Dimension {
                        op: "fixed_mask",
                        left: crate::grid::Shape::new(1, m.height(), m.width()),
                        right: s,
                    });
                }
            }
            _ => {}
        }
        Ok(Self {
            schedule,
            model_g,
            model_e,
            params,
            mode,
        })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn params(&self) -> &SnbParams {
        &self.params
    }

    pub fn mode(&self) -> &BlendMode {
        &self.mode
    }

    pub fn shape(&self) -> crate::grid::Shape {
        match self.mode {
            BlendMode::SingleE => self.model_e.shape(),
            _ => self.model_g.shape(),
        }
    }

    /// `x_T ~ N(0, I)` from `seed`.
    pub fn initial_state(&self, seed: u64) -> Grid {
        rng::standard_normal_grid(&mut rng::seeded(seed), self.shape())
    }

    /// Advances `x_t` to `x_{t-1}` under the configured blend mode.
    pub fn step(&self, x_t: &Grid, t: usize) -> Result<(Grid, Option<StepDiagnostics>)> {
        let p = &self.params;
        let sched = &self.schedule;
        let (g, e) = (self.model_g.as_ref(), self.model_e.as_ref());
        match &self.mode {
            BlendMode::Snb => snb_step(x_t, t, g, e, p, sched).map(|(x, d)| (x, Some(d))),
            BlendMode::SingleG => {
                let (eps, _) = guided(g, x_t, sched, t, &p.cond_g, p.guidance_g, None)?;
                Ok((ddim_step(x_t, &eps, sched, t)?, None))
            }
            BlendMode::SingleE => {
                let (eps, _) = guided(e, x_t, sched, t, &p.cond_e, p.guidance_e, None)?;
                Ok((ddim_step(x_t, &eps, sched, t)?, None))
            }
            BlendMode::WeightedSum(w) => {
                let (eg, _) = guided(g, x_t, sched, t, &p.cond_g, p.guidance_g, None)?;
                let (ee, _) = guided(e, x_t, sched, t, &p.cond_e, p.guidance_e, None)?;
                let eps = weighted_sum_blend(&eg, &ee, *w)?;
                Ok((ddim_step(x_t, &eps, sched, t)?, None))
            }
            BlendMode::FixedMask(mask) => {
                let (eg, _) = guided(g, x_t, sched, t, &p.cond_g, p.guidance_g, None)?;
                let (ee, _) = guided(e, x_t, sched, t, &p.cond_e, p.guidance_e, None)?;
                let eps = fixed_mask_blend(&eg, &ee, mask)?;
                let diag = StepDiagnostics {
                    salience_g: None,
                    salience_e: None,
                    mask: mask.clone(),
                };
                Ok((ddim_step(x_t, &eps, sched, t)?, Some(diag)))
            }
        }
    }

    /// Runs `T -> 0`, calling `visit(t, x_t, diagnostics_of_step_t)` for every
    /// state (diagnostics are `None` at `t = 0`). Returns `x_0`.
    pub fn run_with(&self, seed: u64, mut visit: impl FnMut(usize, &Grid, Option<StepDiagnostics>)) -> Result<Grid> {
        let mut x = self.initial_state(seed);
        for t in (1..=self.schedule.steps()).rev() {
            let (next, diag) = self
                .step(&x, t)
                .map_err(|e| FuseError::Step { t, source: Box::new(e) })?;
            visit(t, &x, diag);
            x = next;
        }
        visit(0, &x, None);
        Ok(x)
    }

    /// Final sample only; nothing is retained along the way.
    pub fn sample(&self, seed: u64) -> Result<Grid> {
        self.run_with(seed, |_, _, _| {})
    }

    /// Full trajectory `x_T .. x_0`; diagnostics kept when `diagnostics` is set.
    pub fn run(&self, seed: u64, diagnostics: bool) -> Result<Trajectory> {
        let mut states = Vec::with_capacity(self.schedule.steps() + 1);
        self.run_with(seed, |t, x, d| {
            states.push(TrajectoryState {
                t,
                x: x.clone(),
                diagnostics: if diagnostics { d } else { None },
            })
        })?;
        Ok(Trajectory::new(states))
    }
}

/// Resolves `config` (paths relative to `base_dir`) and samples one trajectory.
pub fn run_fusion(config: &FusionConfig, base_dir: &std::path::Path) -> Result<Trajectory> {
    let sampler = config.build(base_dir)?;
    sampler.run(config.seed, config.diagnostics)
}

#[cfg(test)]
mod tests;
