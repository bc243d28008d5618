//! Saliency-aware fusion of two conditional diffusion models at desk scale.
//!
//! Two noise predictors share a deterministic DDIM trajectory. At every step
//! each model's classifier-free-guidance gap is turned into a salience map,
//! the maps are softmax-normalized, and a per-pixel argmax mask decides
//! which model's guided noise drives the update. Analytic Gaussian scene
//! predictors make every stage checkable against closed forms.

pub mod error;
pub mod fixtures;
pub mod grid;
pub mod guidance;
pub mod harness;
pub mod predictor;
pub mod rng;
pub mod sampler;
pub mod schedule;

pub use error::{FuseError, Result};
pub use grid::{BlendMask, BlurKernel, Grid, SalienceMap, Shape};
pub use predictor::{Condition, GaussianSceneModel, NoisePredictor, TabulatedPredictor};
pub use sampler::{FusionConfig, Sampler, SnbParams, Trajectory};
pub use schedule::{Schedule, ScheduleKind};
