//! Built-in analytic scenes.
//!
//! The two-region scenes split an 8×8 single-channel image into a left and a
//! right half. The general model's condition differs from its unconditional
//! mixture only on the left half, the expert's only on the right half, so
//! each model's conditional/unconditional gap lives in its own region.

use crate::error::{FuseError, Result};
use crate::grid::{Grid, Shape};
use crate::predictor::{Condition, GaussianSceneModel, SceneEntry};

pub const TWO_REGION_SHAPE: Shape = Shape::new(1, 8, 8);
pub const REGION_STD: f64 = 0.5;
/// Mean the general model's `scene` condition puts on the left half.
pub const GENERAL_LEFT_MEAN: f64 = 1.0;
/// Mean the expert's `object` condition puts on the right half.
pub const EXPERT_RIGHT_MEAN: f64 = -1.0;

pub const BUILTIN_SCENES: &[&str] = &[
    "two_region_general",
    "two_region_expert",
    "two_region_target",
    "gaussian_grid",
];

pub fn builtin(name: &str) -> Result<GaussianSceneModel> {
    match name {
        "two_region_general" => Ok(two_region_general()),
        "two_region_expert" => Ok(two_region_expert()),
        "two_region_target" => Ok(two_region_target()),
        "gaussian_grid" => Ok(gaussian_grid()),
        other => Err(FuseError::param(format!(
            "unknown builtin scene `{other}` (expected one of {})",
            BUILTIN_SCENES.join(", ")
        ))),
    }
}

pub fn is_left(x: usize) -> bool {
    x < TWO_REGION_SHAPE.width / 2
}

fn halves(left: f64, right: f64) -> Grid {
    Grid::from_fn(TWO_REGION_SHAPE, |_, _, x| if is_left(x) { left } else { right })
}

fn entry(left: f64, right: f64) -> SceneEntry {
    SceneEntry::new(halves(left, right), Grid::filled(TWO_REGION_SHAPE, REGION_STD)).expect("valid entry")
}

/// Conditions `scene` / `scene_alt`: `±1` on the left, 0 on the right.
pub fn two_region_general() -> GaussianSceneModel {
    GaussianSceneModel::from_conditions([
        (Condition::new("scene"), entry(GENERAL_LEFT_MEAN, 0.0)),
        (Condition::new("scene_alt"), entry(-GENERAL_LEFT_MEAN, 0.0)),
    ])
    .expect("valid scene")
}

/// Conditions `object` / `object_alt`: 0 on the left, `∓1` on the right.
pub fn two_region_expert() -> GaussianSceneModel {
    GaussianSceneModel::from_conditions([
        (Condition::new("object"), entry(0.0, EXPERT_RIGHT_MEAN)),
        (Condition::new("object_alt"), entry(0.0, -EXPERT_RIGHT_MEAN)),
    ])
    .expect("valid scene")
}

/// Condition `composite`: each half taken from its region's expert.
pub fn two_region_target() -> GaussianSceneModel {
    GaussianSceneModel::from_conditions([(Condition::new("composite"), entry(GENERAL_LEFT_MEAN, EXPERT_RIGHT_MEAN))])
        .expect("valid scene")
}

/// Condition `data` on 1×8×8: means spread over `[-1, 1]`, std over `[0.3, 1]`.
pub fn gaussian_grid() -> GaussianSceneModel {
    let shape = Shape::new(1, 8, 8);
    let mean = Grid::from_fn(shape, |_, y, x| -1.0 + 2.0 * (y * 8 + x) as f64 / 63.0);
    let std = Grid::from_fn(shape, |_, y, x| 0.3 + 0.7 * (((y * 8 + x) * 37) % 64) as f64 / 63.0);
    GaussianSceneModel::from_conditions([(Condition::new("data"), SceneEntry::new(mean, std).expect("valid entry"))])
        .expect("valid scene")
}
