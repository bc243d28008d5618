//! Variance schedules and the cumulative signal rate `alpha_bar[t]`.

use std::fmt::Write as _;

use crate::error::{FuseError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// `beta` linearly spaced from `1e-4` to `0.02`.
    #[default]
    Linear,
    /// Squared-cosine `alpha_bar` with offset `0.008`.
    Cosine,
}

pub const LINEAR_BETA_START: f64 = 1e-4;
pub const LINEAR_BETA_END: f64 = 0.02;
const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// `None` for schedules built from explicit `alpha_bar` values.
    kind: Option<ScheduleKind>,
    /// `betas[0]` is a placeholder 0 so indices line up with timesteps.
    betas: Vec<f64>,
    alpha_bar: Vec<f64>,
}

/// Timestep view handed to noise predictors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub t: usize,
    pub total: usize,
    pub alpha_bar: f64,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(FuseError::param("schedule needs at least one timestep"));
        }
        let betas: Vec<f64> = match kind {
            ScheduleKind::Linear => (0..steps)
                .map(|i| {
                    if steps == 1 {
                        LINEAR_BETA_START
                    } else {
                        LINEAR_BETA_START + (LINEAR_BETA_END - LINEAR_BETA_START) * i as f64 / (steps - 1) as f64
                    }
                })
                .collect(),
            ScheduleKind::Cosine => {
                let f = |u: f64| {
                    let a = (u + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2;
                    a.cos().powi(2)
                };
                (1..=steps)
                    .map(|t| {
                        let prev = f((t - 1) as f64 / steps as f64);
                        let cur = f(t as f64 / steps as f64);
                        (1.0 - cur / prev).clamp(f64::MIN_POSITIVE, MAX_BETA)
                    })
                    .collect()
            }
        };
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        let mut padded = Vec::with_capacity(steps + 1);
        padded.push(0.0);
        padded.extend(betas);
        let sched = Self {
            kind: Some(kind),
            betas: padded,
            alpha_bar,
        };
        sched.check_invariants()?;
        Ok(sched)
    }

    /// Schedule from explicit values `alpha_bar[0..=T]`; `alpha_bar[0]` must be 1.
    pub fn from_alpha_bars(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.len() < 2 || alpha_bar[0] != 1.0 {
            return Err(FuseError::param("alpha_bar needs T+1 >= 2 values starting at 1"));
        }
        let mut betas = vec![0.0];
        betas.extend(alpha_bar.windows(2).map(|w| 1.0 - w[1] / w[0]));
        let sched = Self {
            kind: None,
            betas,
            alpha_bar,
        };
        sched.check_invariants()?;
        Ok(sched)
    }

    fn check_invariants(&self) -> Result<()> {
        for t in 1..self.alpha_bar.len() {
            let (prev, cur) = (self.alpha_bar[t - 1], self.alpha_bar[t]);
            if !(cur > 0.0 && cur < prev) {
                return Err(FuseError::param(format!(
                    "schedule ({:?}) with T={} is not strictly decreasing at t={t}",
                    self.kind,
                    self.steps()
                )));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> Option<ScheduleKind> {
        self.kind
    }

    /// Number of diffusion timesteps `T`.
    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn alpha_bar_at(&self, t: usize) -> Result<f64> {
        self.alpha_bar
            .get(t)
            .copied()
            .ok_or_else(|| FuseError::param(format!("timestep {t} outside 0..={}", self.steps())))
    }

    pub fn beta_at(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.steps() {
            return Err(FuseError::param(format!("timestep {t} outside 1..={}", self.steps())));
        }
        Ok(self.betas[t])
    }

    /// Predictor-facing view of timestep `t` (`1 <= t <= T`).
    pub fn step(&self, t: usize) -> Result<Step> {
        if t == 0 || t > self.steps() {
            return Err(FuseError::param(format!("timestep {t} outside 1..={}", self.steps())));
        }
        Ok(Step {
            t,
            total: self.steps(),
            alpha_bar: self.alpha_bar[t],
        })
    }

    /// Audit dump with columns `t,beta_t,alpha_bar_t`; row 0 has `beta_t = 0`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,beta_t,alpha_bar_t\n");
        for (t, (b, a)) in self.betas.iter().zip(&self.alpha_bar).enumerate() {
            writeln!(out, "{t},{b},{a}").unwrap();
        }
        out
    }
}
