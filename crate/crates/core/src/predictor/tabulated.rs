//! Tabulated affine predictors: `eps = gain ⊙ x_t + bias`, one `(gain, bias)`
//! pair per condition and timestep bucket.
//!
//! File grammar (line oriented, strict):
//!
//! ```text
//! fuse-tabulated 1
//! shape <C> <H> <W>
//! steps <T>
//! buckets <K>
//! conditions NULL <id> ...
//! gain <id> <bucket>
//! # channel 0
//! <H comma-separated rows of W values>
//! ...
//! bias <id> <bucket>
//! # channel 0
//! ...
//! ```
//!
//! The five header lines come first, in this order. Every `(id, bucket)` pair
//! must have exactly one `gain` block and one `bias` block, each a CSV grid
//! of the declared shape. Blank lines are ignored; nothing else is allowed.
//! Timestep `t` maps to bucket `floor((t - 1) * K / T)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{check_input, Condition, NoisePredictor};
use crate::error::{FuseError, Result};
use crate::grid::io::{parse_csv_lines, to_csv};
use crate::grid::{Grid, Shape};
use crate::schedule::Step;

pub const DEFAULT_BUCKETS: usize = 10;
const MAGIC: &str = "fuse-tabulated 1";

#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub gain: Grid,
    pub bias: Grid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPredictor {
    shape: Shape,
    steps: usize,
    buckets: usize,
    table: BTreeMap<(Condition, usize), AffineMap>,
}

impl TabulatedPredictor {
    pub fn new(
        shape: Shape,
        steps: usize,
        buckets: usize,
        table: BTreeMap<(Condition, usize), AffineMap>,
    ) -> Result<Self> {
        if steps == 0 || buckets == 0 || buckets > steps {
            return Err(FuseError::param(format!(
                "need 1 <= buckets <= steps, got {buckets} buckets over {steps} steps"
            )));
        }
        let p = Self {
            shape,
            steps,
            buckets,
            table,
        };
        p.validate()
            .map_err(|(key, msg)| FuseError::param(format!("{key}: {msg}")))?;
        Ok(p)
    }

    /// Same affine map for every condition (including `NULL`) and bucket.
    pub fn constant(shape: Shape, steps: usize, conditions: &[Condition], map: AffineMap) -> Result<Self> {
        let mut table = BTreeMap::new();
        let mut ids: Vec<Condition> = conditions.to_vec();
        if !ids.iter().any(Condition::is_null) {
            ids.insert(0, Condition::null());
        }
        for c in ids {
            for b in 0..DEFAULT_BUCKETS.min(steps) {
                table.insert((c.clone(), b), map.clone());
            }
        }
        Self::new(shape, steps, DEFAULT_BUCKETS.min(steps), table)
    }

    fn ids(&self) -> Vec<Condition> {
        let mut ids: Vec<Condition> = self.table.keys().map(|(c, _)| c.clone()).collect();
        ids.dedup();
        ids
    }

    fn validate(&self) -> std::result::Result<(), (String, String)> {
        let ids = self.ids();
        if !ids.iter().any(Condition::is_null) {
            return Err(("conditions".into(), "missing the NULL condition".into()));
        }
        for c in &ids {
            for b in 0..self.buckets {
                let key = format!("{c} {b}");
                let map = self
                    .table
                    .get(&(c.clone(), b))
                    .ok_or_else(|| (key.clone(), "missing entry".to_string()))?;
                for g in [&map.gain, &map.bias] {
                    if g.shape() != self.shape {
                        return Err((key, format!("grid is {}, expected {}", g.shape(), self.shape)));
                    }
                }
            }
        }
        if let Some((c, b)) = self.table.keys().find(|(_, b)| *b >= self.buckets) {
            return Err((format!("{c} {b}"), format!("bucket outside 0..{}", self.buckets)));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn bucket_of(&self, t: usize) -> usize {
        ((t.saturating_sub(1)) * self.buckets / self.steps).min(self.buckets - 1)
    }

    pub fn to_text(&self) -> String {
        let s = self.shape;
        let mut out = String::new();
        writeln!(out, "{MAGIC}").unwrap();
        writeln!(out, "shape {} {} {}", s.channels, s.height, s.width).unwrap();
        writeln!(out, "steps {}", self.steps).unwrap();
        writeln!(out, "buckets {}", self.buckets).unwrap();
        let ids: Vec<String> = self.ids().iter().map(|c| c.to_string()).collect();
        writeln!(out, "conditions {}", ids.join(" ")).unwrap();
        for ((c, b), map) in &self.table {
            writeln!(out, "gain {c} {b}").unwrap();
            out.push_str(&to_csv(&map.gain));
            writeln!(out, "bias {c} {b}").unwrap();
            out.push_str(&to_csv(&map.bias));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| FuseError::io(path, e))
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, (String, String)> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty())
            .peekable();

        let mut header = |key: &str| -> std::result::Result<Vec<String>, (String, String)> {
            let (no, line) = lines
                .next()
                .ok_or_else(|| (key.to_string(), "unexpected end of file".to_string()))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err((
                    key.to_string(),
                    format!("line {no}: expected `{key} ...`, found `{line}`"),
                ));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let magic = header("fuse-tabulated")?;
        if magic != ["1"] {
            return Err(("fuse-tabulated".into(), format!("unsupported version {magic:?}")));
        }
        let num = |key: &str, v: &[String], n: usize| -> std::result::Result<Vec<usize>, (String, String)> {
            if v.len() != n {
                return Err((key.to_string(), format!("expected {n} integers, got {}", v.len())));
            }
            v.iter()
                .map(|s| {
                    s.parse::<usize>()
                        .ok()
                        .filter(|&x| x > 0)
                        .ok_or_else(|| (key.to_string(), format!("`{s}` is not a positive integer")))
                })
                .collect()
        };
        let dims = num("shape", &header("shape")?, 3)?;
        let shape = Shape::new(dims[0], dims[1], dims[2]);
        let steps = num("steps", &header("steps")?, 1)?[0];
        let buckets = num("buckets", &header("buckets")?, 1)?[0];
        let ids: Vec<Condition> = header("conditions")?.into_iter().map(Condition::new).collect();
        if !ids.iter().any(Condition::is_null) {
            return Err(("conditions".into(), "missing the NULL condition".into()));
        }
        for (i, c) in ids.iter().enumerate() {
            if ids[..i].contains(c) {
                return Err(("conditions".into(), format!("duplicate condition `{c}`")));
            }
        }

        let mut gains = BTreeMap::new();
        let mut biases = BTreeMap::new();
        while let Some((no, line)) = lines.next() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let (kind, cond, bucket) = match parts.as_slice() {
                [kind @ ("gain" | "bias"), cond, bucket] => (*kind, *cond, *bucket),
                _ => {
                    return Err((
                        format!("line {no}"),
                        format!("expected `gain|bias <id> <bucket>`, found `{line}`"),
                    ))
                }
            };
            let key = format!("{kind} {cond} {bucket}");
            let cond = Condition::new(cond);
            if !ids.contains(&cond) {
                return Err((key, "condition not declared in the header".into()));
            }
            let bucket: usize = bucket
                .parse()
                .ok()
                .filter(|&b| b < buckets)
                .ok_or_else(|| (key.clone(), format!("bucket must be an integer in 0..{buckets}")))?;
            let mut block = Vec::new();
            while let Some(&(_, l)) = lines.peek() {
                let head = l.split_whitespace().next();
                if matches!(head, Some("gain" | "bias")) {
                    break;
                }
                block.push(lines.next().unwrap());
            }
            let grid = parse_csv_lines(block, Some(shape))
                .map_err(|e| (key.clone(), format!("line {}: {}", e.line, e.msg)))?;
            let dest = if kind == "gain" { &mut gains } else { &mut biases };
            if dest.insert((cond, bucket), grid).is_some() {
                return Err((key, "duplicate block".into()));
            }
        }

        let mut table = BTreeMap::new();
        for c in &ids {
            for b in 0..buckets {
                let k = (c.clone(), b);
                let gain = gains
                    .remove(&k)
                    .ok_or_else(|| (format!("gain {c} {b}"), "missing block".to_string()))?;
                let bias = biases
                    .remove(&k)
                    .ok_or_else(|| (format!("bias {c} {b}"), "missing block".to_string()))?;
                table.insert(k, AffineMap { gain, bias });
            }
        }
        Self::new(shape, steps, buckets, table).map_err(|e| ("header".to_string(), e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| FuseError::io(path, e))?;
        Self::from_text(&text).map_err(|(key, msg)| FuseError::load(path, key, msg))
    }
}

impl NoisePredictor for TabulatedPredictor {
    fn shape(&self) -> Shape {
        self.shape
    }

    fn conditions(&self) -> Vec<Condition> {
        self.ids().into_iter().filter(|c| !c.is_null()).collect()
    }

    fn predict_noise(&self, x_t: &Grid, step: Step, cond: &Condition) -> Result<Grid> {
        check_input(self, x_t)?;
        if step.total != self.steps {
            return Err(FuseError::param(format!(
                "tabulated predictor was built for T={}, sampler uses T={}",
                self.steps, step.total
            )));
        }
        let map = self
            .table
            .get(&(cond.clone(), self.bucket_of(step.t)))
            .ok_or_else(|| FuseError::Condition(cond.to_string()))?;
        let values = x_t
            .values()
            .iter()
            .zip(map.gain.values().iter().zip(map.bias.values()))
            .map(|(&x, (&a, &b))| a * x + b)
            .collect();
        Grid::new(self.shape, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "fuse-tabulated 1
shape 1 2 2
steps 4
buckets 2
conditions NULL cat
gain NULL 0
# channel 0
0,0
0,0
bias NULL 0
# channel 0
0.1,0.1
0.1,0.1
gain NULL 1
# channel 0
1,1
1,1
bias NULL 1
# channel 0
0,0
0,0
gain cat 0
# channel 0
2,0
0,2
bias cat 0
# channel 0
0,1
1,0
gain cat 1
# channel 0
0,0
0,0
bias cat 1
# channel 0
-1,-1
-1,-1
";

    fn step(t: usize) -> Step {
        Step {
            t,
            total: 4,
            alpha_bar: 0.5,
        }
    }

    #[test]
    fn minimal_file_predicts_per_bucket() {
        let p = TabulatedPredictor::from_text(MINIMAL).unwrap();
        let x = Grid::new(Shape::new(1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let cat = Condition::new("cat");
        assert_eq!(p.bucket_of(1), 0);
        assert_eq!(p.bucket_of(2), 0);
        assert_eq!(p.bucket_of(3), 1);
        assert_eq!(p.bucket_of(4), 1);
        assert_eq!(
            p.predict_noise(&x, step(1), &cat).unwrap().values(),
            &[2.0, 1.0, 1.0, 8.0]
        );
        assert_eq!(p.predict_noise(&x, step(4), &cat).unwrap().values(), &[-1.0; 4]);
        assert_eq!(
            p.predict_noise(&x, step(2), &Condition::null()).unwrap().values(),
            &[0.1; 4]
        );
        assert_eq!(p.predict_noise(&x, step(3), &Condition::null()).unwrap(), x);
        assert_eq!(p.conditions(), vec![cat]);
    }

    #[test]
    fn degenerate_affine_is_constant() {
        let s = Shape::new(1, 2, 2);
        let p = TabulatedPredictor::constant(
            s,
            20,
            &[Condition::new("a")],
            AffineMap {
                gain: Grid::zeros(s),
                bias: Grid::filled(s, 0.3),
            },
        )
        .unwrap();
        let step = Step {
            t: 13,
            total: 20,
            alpha_bar: 0.1,
        };
        for x in [-5.0, 0.0, 2.5] {
            let out = p
                .predict_noise(&Grid::filled(s, x), step, &Condition::new("a"))
                .unwrap();
            assert_eq!(out, Grid::filled(s, 0.3));
        }
    }

    #[test]
    fn text_roundtrip_is_bit_identical() {
        let p = TabulatedPredictor::from_text(MINIMAL).unwrap();
        let back = TabulatedPredictor::from_text(&p.to_text()).unwrap();
        assert_eq!(back, p);
        let x = Grid::new(Shape::new(1, 2, 2), vec![0.1, -0.7, 1e-3, 9.0]).unwrap();
        for t in 1..=4 {
            let a = p.predict_noise(&x, step(t), &Condition::new("cat")).unwrap();
            let b = back.predict_noise(&x, step(t), &Condition::new("cat")).unwrap();
            assert!(a
                .values()
                .iter()
                .zip(b.values())
                .all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }

    #[test]
    fn missing_null_is_rejected() {
        let text = MINIMAL.replace("conditions NULL cat", "conditions cat");
        let (key, msg) = TabulatedPredictor::from_text(&text).unwrap_err();
        assert_eq!(key, "conditions");
        assert!(msg.contains("NULL"));
    }

    #[test]
    fn load_errors_name_the_key() {
        let missing = MINIMAL.split("bias cat 1").next().unwrap();
        assert_eq!(TabulatedPredictor::from_text(missing).unwrap_err().0, "bias cat 1");

        let bad_shape = MINIMAL.replacen("2,0\n0,2", "2,0,1\n0,2,1", 1);
        assert_eq!(TabulatedPredictor::from_text(&bad_shape).unwrap_err().0, "gain cat 0");

        let undeclared = MINIMAL.replace("gain cat 1", "gain dog 1");
        assert_eq!(TabulatedPredictor::from_text(&undeclared).unwrap_err().0, "gain dog 1");

        let dup = format!("{MINIMAL}bias cat 1\n# channel 0\n0,0\n0,0\n");
        assert_eq!(TabulatedPredictor::from_text(&dup).unwrap_err().0, "bias cat 1");

        let bad_header = MINIMAL.replace("steps 4", "steps four");
        assert_eq!(TabulatedPredictor::from_text(&bad_header).unwrap_err().0, "steps");
    }

    #[test]
    fn load_from_disk_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.tab");
        std::fs::write(&path, MINIMAL.replace("conditions NULL cat", "conditions cat")).unwrap();
        let err = TabulatedPredictor::load(&path).unwrap_err();
        assert!(matches!(err, FuseError::Load { ref key, .. } if key == "conditions"));
    }

    #[test]
    fn schedule_length_must_match() {
        let p = TabulatedPredictor::from_text(MINIMAL).unwrap();
        let x = Grid::zeros(Shape::new(1, 2, 2));
        let wrong = Step {
            t: 1,
            total: 5,
            alpha_bar: 0.5,
        };
        assert!(p.predict_noise(&x, wrong, &Condition::null()).is_err());
        assert!(matches!(
            p.predict_noise(&x, step(1), &Condition::new("dog")),
            Err(FuseError::Condition(_))
        ));
    }
}
