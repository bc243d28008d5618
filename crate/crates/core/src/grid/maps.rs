use super::{Grid, Shape};
use crate::error::{FuseError, Result};

/// Single-channel non-negative `height × width` map.
#[derive(Debug, Clone, PartialEq)]
pub struct SalienceMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl SalienceMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let grid = Grid::new(Shape::new(1, height, width), values)?;
        if let Some(i) = grid.values().iter().position(|&v| v < 0.0) {
            return Err(FuseError::param(format!(
                "salience value at {i} is negative ({})",
                grid.values()[i]
            )));
        }
        Ok(Self {
            height,
            width,
            values: grid.into_values(),
        })
    }

    /// Takes the single channel of `grid`; values must already be non-negative.
    pub fn from_grid(grid: Grid) -> Result<Self> {
        let s = grid.shape();
        if s.channels != 1 {
            return Err(FuseError::InvalidShape {
                op: "SalienceMap::from_grid",
                msg: format!("expected one channel, got {s}"),
            });
        }
        Self::new(s.height, s.width, grid.into_values())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> Shape {
        Shape::new(1, self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_grid(&self) -> Grid {
        Grid::new(self.shape(), self.values.clone()).expect("salience map holds a valid grid")
    }

    fn ensure_same_shape(&self, other: &SalienceMap, op: &'static str) -> Result<()> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(FuseError::Dimension {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }
}

/// Binary `height × width` selector: 1 picks the general model, 0 the expert.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlendMask {
    height: usize,
    width: usize,
    values: Vec<u8>,
}

impl BlendMask {
    pub fn new(height: usize, width: usize, values: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(FuseError::InvalidShape {
                op: "BlendMask::new",
                msg: format!("{height}x{width} mask with {} values", values.len()),
            });
        }
        if let Some(i) = values.iter().position(|&v| v > 1) {
            return Err(FuseError::param(format!(
                "mask value at {i} is {} (expected 0 or 1)",
                values[i]
            )));
        }
        Ok(Self { height, width, values })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        Self::new(height, width, vec![value as u8; height * width]).expect("valid mask")
    }

    /// Reads a single-channel grid whose entries are exactly 0 or 1.
    pub fn from_grid(grid: &Grid) -> Result<Self> {
        let s = grid.shape();
        if s.channels != 1 {
            return Err(FuseError::InvalidShape {
                op: "BlendMask::from_grid",
                msg: format!("expected one channel, got {s}"),
            });
        }
        let mut values = Vec::with_capacity(s.plane());
        for (i, &v) in grid.values().iter().enumerate() {
            if v == 1.0 {
                values.push(1);
            } else if v == 0.0 {
                values.push(0);
            } else {
                return Err(FuseError::param(format!("mask value at {i} is {v} (expected 0 or 1)")));
            }
        }
        Self::new(s.height, s.width, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    #[inline]
    pub fn selects_general(&self, i: usize) -> bool {
        self.values[i] == 1
    }

    /// Share of positions set to 1.
    pub fn coverage(&self) -> f64 {
        self.values.iter().filter(|&&v| v == 1).count() as f64 / self.values.len() as f64
    }

    pub fn to_grid(&self) -> Grid {
        Grid::new(
            Shape::new(1, self.height, self.width),
            self.values.iter().map(|&v| v as f64).collect(),
        )
        .expect("mask holds a valid grid")
    }
}

/// Softmax over all spatial positions of `map` at temperature `k`.
pub fn spatial_softmax(map: &SalienceMap, k: f64) -> SalienceMap {
    let max = map.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(k * v));
    let exps: Vec<f64> = map.values.iter().map(|&v| (k * v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    SalienceMap {
        height: map.height,
        width: map.width,
        values: exps.into_iter().map(|e| e / total).collect(),
    }
}

/// `1` where `general >= expert`, else `0`; ties go to `general`.
pub fn argmax_mask(general: &SalienceMap, expert: &SalienceMap) -> Result<BlendMask> {
    general.ensure_same_shape(expert, "argmax_mask")?;
    let values = general
        .values
        .iter()
        .zip(&expert.values)
        .map(|(a, b)| (a >= b) as u8)
        .collect();
    BlendMask::new(general.height, general.width, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(h: usize, w: usize, v: &[f64]) -> SalienceMap {
        SalienceMap::new(h, w, v.to_vec()).unwrap()
    }

    #[test]
    fn uniform_map_stays_uniform() {
        let m = map(2, 3, &[0.4; 6]);
        for k in [0.0, 1.0, 100.0] {
            let out = spatial_softmax(&m, k);
            assert!(out.values().iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-15));
        }
    }

    #[test]
    fn zero_temperature_is_uniform() {
        let out = spatial_softmax(&map(2, 2, &[0.0, 3.0, 7.0, 1.0]), 0.0);
        assert!(out.values().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn closed_form_pair() {
        let out = spatial_softmax(&map(1, 2, &[0.0, 3f64.ln()]), 1.0);
        assert!((out.values()[0] - 0.25).abs() < 1e-15);
        assert!((out.values()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn large_temperature_does_not_overflow() {
        let out = spatial_softmax(&map(1, 3, &[1.0, 2.0, 3.0]), 1e6);
        assert_eq!(out.values(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn argmax_cases() {
        let m = argmax_mask(&map(1, 2, &[0.7, 0.3]), &map(1, 2, &[0.2, 0.8])).unwrap();
        assert_eq!(m.values(), &[1, 0]);
        let a = map(1, 3, &[0.1, 0.5, 0.9]);
        assert_eq!(argmax_mask(&a, &a).unwrap().values(), &[1, 1, 1]);
        let b = map(1, 3, &[0.0, 0.4, 0.8]);
        assert_eq!(argmax_mask(&a, &b).unwrap().values(), &[1, 1, 1]);
    }

    #[test]
    fn argmax_shape_mismatch() {
        let err = argmax_mask(&map(1, 2, &[0.0; 2]), &map(2, 1, &[0.0; 2])).unwrap_err();
        assert!(matches!(err, FuseError::Dimension { .. }));
    }

    #[test]
    fn mask_rejects_non_binary() {
        assert!(BlendMask::new(1, 2, vec![0, 2]).is_err());
        let g = Grid::new(Shape::new(1, 1, 2), vec![1.0, 0.5]).unwrap();
        assert!(BlendMask::from_grid(&g).is_err());
    }

    #[test]
    fn negative_salience_rejected() {
        assert!(SalienceMap::new(1, 2, vec![0.1, -0.1]).is_err());
    }

    fn arb_map() -> impl Strategy<Value = SalienceMap> {
        proptest::collection::vec(0f64..5.0, 20).prop_map(|v| SalienceMap::new(4, 5, v).unwrap())
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(m in arb_map(), k in -200f64..200.0) {
            let s: f64 = spatial_softmax(&m, k).values().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }

        #[test]
        fn softmax_shift_invariant(m in arb_map(), k in 0f64..50.0, shift in 0f64..10.0) {
            let shifted = SalienceMap::new(4, 5, m.values().iter().map(|v| v + shift).collect()).unwrap();
            let (a, b) = (spatial_softmax(&m, k), spatial_softmax(&shifted, k));
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn softmax_monotone(m in arb_map(), k in 0.01f64..20.0) {
            let out = spatial_softmax(&m, k);
            for i in 0..20 {
                for j in 0..20 {
                    if m.values()[i] > m.values()[j] {
                        prop_assert!(out.values()[i] > out.values()[j]);
                    }
                }
            }
        }

        #[test]
        fn argmax_complementary_off_ties(a in arb_map(), b in arb_map()) {
            let ab = argmax_mask(&a, &b).unwrap();
            let ba = argmax_mask(&b, &a).unwrap();
            for i in 0..20 {
                if a.values()[i] != b.values()[i] {
                    prop_assert_eq!(ab.values()[i] + ba.values()[i], 1);
                } else {
                    prop_assert_eq!((ab.values()[i], ba.values()[i]), (1, 1));
                }
            }
        }
    }
}
