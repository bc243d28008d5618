//! Noise predictors `eps(x_t | c)`.
//!
//! Two implementations are provided: [`GaussianSceneModel`], whose per-pixel
//! Gaussian data distribution admits a closed-form optimal denoiser, and
//! [`TabulatedPredictor`], a per-timestep-bucket affine map loaded from a
//! text file.

mod scene;
mod tabulated;

use std::fmt;
use std::sync::Arc;

pub use scene::{analytic_optimal_eps, GaussianSceneModel, SceneEntry};
pub use tabulated::{AffineMap, TabulatedPredictor, DEFAULT_BUCKETS};

use crate::error::{FuseError, Result};
use crate::grid::{Grid, Shape};
use crate::schedule::Step;

/// Condition token; `"NULL"` is the unconditional branch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct Condition(String);

impl Condition {
    pub const NULL_TOKEN: &'static str = "NULL";

    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn null() -> Self {
        Self(Self::NULL_TOKEN.to_string())
    }

    pub fn is_null(&self) -> bool {
        self.0 == Self::NULL_TOKEN
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Condition {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

pub trait NoisePredictor: Send + Sync + fmt::Debug {
    /// Shape every input and output grid must have.
    fn shape(&self) -> Shape;

    /// Condition ids this predictor resolves, excluding `NULL`.
    fn conditions(&self) -> Vec<Condition>;

    fn predict_noise(&self, x_t: &Grid, step: Step, cond: &Condition) -> Result<Grid>;

    fn accepts(&self, cond: &Condition) -> bool {
        cond.is_null() || self.conditions().contains(cond)
    }
}

impl<P: NoisePredictor + ?Sized> NoisePredictor for Arc<P> {
    fn shape(&self) -> Shape {
        (**self).shape()
    }

    fn conditions(&self) -> Vec<Condition> {
        (**self).conditions()
    }

    fn predict_noise(&self, x_t: &Grid, step: Step, cond: &Condition) -> Result<Grid> {
        (**self).predict_noise(x_t, step, cond)
    }
}

pub(crate) fn check_input(model: &dyn NoisePredictor, x_t: &Grid) -> Result<()> {
    if x_t.shape() != model.shape() {
        return Err(FuseError::Dimension {
            op: "predict_noise",
            left: x_t.shape(),
            right: model.shape(),
        });
    }
    Ok(())
}
