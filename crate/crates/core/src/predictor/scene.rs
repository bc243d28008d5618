use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{check_input, Condition, NoisePredictor};
use crate::error::{FuseError, Result};
use crate::grid::{Grid, Shape};
use crate::schedule::{Schedule, Step};

/// Per-pixel Gaussian `N(mean, std^2)` for one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneEntry {
    pub mean: Grid,
    pub std: Grid,
}

impl SceneEntry {
    pub fn new(mean: Grid, std: Grid) -> Result<Self> {
        mean.ensure_same_shape(&std, "SceneEntry")?;
        if let Some(i) = std.values().iter().position(|&s| s <= 0.0) {
            return Err(FuseError::param(format!("std at index {i} is not positive")));
        }
        Ok(Self { mean, std })
    }

    pub fn uniform(shape: Shape, mean: f64, std: f64) -> Result<Self> {
        Self::new(Grid::filled(shape, mean), Grid::filled(shape, std))
    }
}

/// Data model where every pixel is an independent Gaussian per condition.
///
/// The `NULL` entry defaults to the moment-matched equal-weight mixture of
/// the conditional entries.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSceneModel {
    shape: Shape,
    entries: BTreeMap<Condition, SceneEntry>,
    null: SceneEntry,
}

impl GaussianSceneModel {
    /// Builds the model with the `NULL` entry moment-matched to the mixture.
    pub fn from_conditions(entries: impl IntoIterator<Item = (Condition, SceneEntry)>) -> Result<Self> {
        let entries: BTreeMap<_, _> = entries.into_iter().collect();
        let first = entries
            .values()
            .next()
            .ok_or_else(|| FuseError::param("scene model needs at least one condition"))?;
        let shape = first.mean.shape();
        let n = entries.len() as f64;
        let mut mean = vec![0.0; shape.len()];
        let mut second = vec![0.0; shape.len()];
        for e in entries.values() {
            if e.mean.shape() != shape {
                return Err(FuseError::Dimension {
                    op: "GaussianSceneModel",
                    left: e.mean.shape(),
                    right: shape,
                });
            }
            for (i, (&m, &s)) in e.mean.values().iter().zip(e.std.values()).enumerate() {
                mean[i] += m / n;
                second[i] += (s * s + m * m) / n;
            }
        }
        let std = mean
            .iter()
            .zip(&second)
            .map(|(m, s2)| (s2 - m * m).max(f64::MIN_POSITIVE).sqrt())
            .collect();
        let null = SceneEntry::new(Grid::new(shape, mean)?, Grid::new(shape, std)?)?;
        Self::with_null(entries, null)
    }

    /// Builds the model with an explicit `NULL` entry.
    pub fn with_null(entries: impl IntoIterator<Item = (Condition, SceneEntry)>, null: SceneEntry) -> Result<Self> {
        let entries: BTreeMap<_, _> = entries.into_iter().collect();
        let shape = null.mean.shape();
        for (c, e) in &entries {
            if c.is_null() {
                return Err(FuseError::param("`NULL` is reserved for the unconditional entry"));
            }
            if e.mean.shape() != shape {
                return Err(FuseError::Dimension {
                    op: "GaussianSceneModel",
                    left: e.mean.shape(),
                    right: shape,
                });
            }
        }
        Ok(Self { shape, entries, null })
    }

    pub fn entry(&self, cond: &Condition) -> Result<&SceneEntry> {
        if cond.is_null() {
            return Ok(&self.null);
        }
        self.entries
            .get(cond)
            .ok_or_else(|| FuseError::Condition(cond.to_string()))
    }

    pub fn null_entry(&self) -> &SceneEntry {
        &self.null
    }

    fn eps(&self, x_t: &Grid, alpha_bar: f64, cond: &Condition) -> Result<Grid> {
        check_input(self, x_t)?;
        let entry = self.entry(cond)?;
        let sqrt_ab = alpha_bar.sqrt();
        let one_minus = 1.0 - alpha_bar;
        let sqrt_om = one_minus.sqrt();
        // eps* = (x - sqrt(ab) E[x0|x]) / sqrt(1-ab), simplified to avoid the
        // cancellation between x and sqrt(ab) E[x0|x]
        let values = x_t
            .values()
            .iter()
            .zip(entry.mean.values().iter().zip(entry.std.values()))
            .map(|(&x, (&mu, &sd))| sqrt_om * (x - sqrt_ab * mu) / (alpha_bar * sd * sd + one_minus))
            .collect();
        Grid::new(self.shape, values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| FuseError::io(path, e))?;
        Self::from_json(&text).map_err(|(key, msg)| FuseError::load(path, key, msg))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| FuseError::io(path, e))
    }

    pub fn to_json(&self) -> String {
        let entry = |e: &SceneEntry| file::Entry {
            mean: e.mean.values().to_vec(),
            std: e.std.values().to_vec(),
        };
        let doc = file::Scene {
            shape: self.shape,
            conditions: self
                .entries
                .iter()
                .map(|(c, e)| (c.as_str().to_string(), entry(e)))
                .collect(),
            null: Some(entry(&self.null)),
        };
        serde_json::to_string_pretty(&doc).expect("scene serializes")
    }

    /// Parses the JSON scene document. Errors carry the offending key.
    pub fn from_json(text: &str) -> std::result::Result<Self, (String, String)> {
        let doc: file::Scene = serde_json::from_str(text).map_err(|e| (format!("line {}", e.line()), e.to_string()))?;
        let shape = doc.shape;
        let build = |key: &str, e: file::Entry| -> std::result::Result<SceneEntry, (String, String)> {
            let err = |e: FuseError| (key.to_string(), e.to_string());
            let mean = Grid::new(shape, e.mean).map_err(err)?;
            let std = Grid::new(shape, e.std).map_err(err)?;
            SceneEntry::new(mean, std).map_err(err)
        };
        let mut entries = Vec::new();
        for (name, e) in doc.conditions {
            let key = format!("conditions.{name}");
            if name == Condition::NULL_TOKEN {
                return Err((key, "`NULL` belongs in the top-level `null` field".into()));
            }
            entries.push((Condition::new(name), build(&key, e)?));
        }
        let model = match doc.null {
            Some(n) => Self::with_null(entries, build("null", n)?),
            None => Self::from_conditions(entries),
        };
        model.map_err(|e| ("conditions".to_string(), e.to_string()))
    }
}

impl NoisePredictor for GaussianSceneModel {
    fn shape(&self) -> Shape {
        self.shape
    }

    fn conditions(&self) -> Vec<Condition> {
        self.entries.keys().cloned().collect()
    }

    fn predict_noise(&self, x_t: &Grid, step: Step, cond: &Condition) -> Result<Grid> {
        self.eps(x_t, step.alpha_bar, cond)
    }
}

/// Closed-form optimal noise prediction for `model` at timestep `t`.
pub fn analytic_optimal_eps(
    model: &GaussianSceneModel,
    x_t: &Grid,
    schedule: &Schedule,
    t: usize,
    cond: &Condition,
) -> Result<Grid> {
    if t == 0 {
        return Err(FuseError::param("no noise to predict at t=0"));
    }
    let step = schedule.step(t)?;
    model.eps(x_t, step.alpha_bar, cond)
}

mod file {
    use std::collections::BTreeMap;

    use crate::grid::Shape;

    #[derive(serde::Serialize, serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Scene {
        pub shape: Shape,
        pub conditions: BTreeMap<String, Entry>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub null: Option<Entry>,
    }

    #[derive(serde::Serialize, serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Entry {
        pub mean: Vec<f64>,
        pub std: Vec<f64>,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ScheduleKind;

    fn px(v: f64) -> Grid {
        Grid::filled(Shape::new(1, 1, 1), v)
    }

    fn single(mu: f64, sd: f64) -> GaussianSceneModel {
        GaussianSceneModel::from_conditions([(Condition::new("c"), SceneEntry::new(px(mu), px(sd)).unwrap())]).unwrap()
    }

    fn step(alpha_bar: f64) -> Step {
        Step {
            t: 1,
            total: 1,
            alpha_bar,
        }
    }

    #[test]
    fn single_pixel_worked_example() {
        // E[x0|x] = 0.92 / 0.52, eps = (1 - 0.8 E) / 0.6
        let m = single(2.0, 0.5);
        let eps = m.predict_noise(&px(1.0), step(0.64), &Condition::new("c")).unwrap();
        let expect = (1.0 - 0.8 * (0.92 / 0.52)) / 0.6;
        assert!((eps.values()[0] - expect).abs() < 1e-14);
        assert!((eps.values()[0] + 0.692_307_692_307_692_3).abs() < 1e-12);
    }

    #[test]
    fn on_scaled_mean_predicts_zero() {
        let m = single(1.7, 1e-9);
        let ab: f64 = 0.3;
        let eps = m
            .predict_noise(&px(ab.sqrt() * 1.7), step(ab), &Condition::new("c"))
            .unwrap();
        assert!(eps.values()[0].abs() < 1e-15);
    }

    #[test]
    fn zero_mean_zero_input() {
        for sd in [0.1, 1.0, 30.0] {
            let m = single(0.0, sd);
            let eps = m.predict_noise(&px(0.0), step(0.5), &Condition::new("c")).unwrap();
            assert_eq!(eps.values()[0], 0.0);
        }
    }

    #[test]
    fn null_is_moment_matched() {
        let a = SceneEntry::uniform(Shape::new(1, 1, 2), 1.0, 0.5).unwrap();
        let b = SceneEntry::uniform(Shape::new(1, 1, 2), -1.0, 0.5).unwrap();
        let m = GaussianSceneModel::from_conditions([(Condition::new("a"), a), (Condition::new("b"), b)]).unwrap();
        let null = m.entry(&Condition::null()).unwrap();
        assert_eq!(null.mean.values(), &[0.0, 0.0]);
        assert!((null.std.values()[0] - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn unknown_condition_and_t0() {
        let m = single(0.0, 1.0);
        assert!(matches!(
            m.predict_noise(&px(0.0), step(0.5), &Condition::new("nope")),
            Err(FuseError::Condition(_))
        ));
        let s = Schedule::new(ScheduleKind::Linear, 10).unwrap();
        assert!(analytic_optimal_eps(&m, &px(0.0), &s, 0, &Condition::null()).is_err());
        assert!(analytic_optimal_eps(&m, &px(0.0), &s, 10, &Condition::null()).is_ok());
        let wrong = Grid::zeros(Shape::new(1, 2, 1));
        assert!(matches!(
            m.predict_noise(&wrong, step(0.5), &Condition::null()),
            Err(FuseError::Dimension { .. })
        ));
    }

    #[test]
    fn rejects_nonpositive_std() {
        assert!(SceneEntry::new(px(0.0), px(0.0)).is_err());
    }

    #[test]
    fn json_roundtrip_and_errors() {
        let m = single(0.25, 0.75);
        let back = GaussianSceneModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);

        let bad = r#"{"shape":{"channels":1,"height":1,"width":1},"conditions":{"c":{"mean":[0],"std":[-1]}}}"#;
        let (key, _) = GaussianSceneModel::from_json(bad).unwrap_err();
        assert_eq!(key, "conditions.c");

        let unknown = r#"{"shape":{"channels":1,"height":1,"width":1},"conditions":{},"extra":1}"#;
        let (_, msg) = GaussianSceneModel::from_json(unknown).unwrap_err();
        assert!(msg.contains("extra"));
    }
}
