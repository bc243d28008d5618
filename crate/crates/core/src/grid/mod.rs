//! Dense `channels × height × width` grids and the small set of kernels the
//! sampler needs: elementwise arithmetic, a normalized blur, spatial softmax
//! and argmax masking.
//!
//! Values are stored row-major in `(channel, row, column)` order.

mod blur;
pub mod io;
mod maps;

use std::fmt;

pub use blur::{gaussian_blur, BlurKernel};
pub use maps::{argmax_mask, spatial_softmax, BlendMask, SalienceMap};

use crate::error::{FuseError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of spatial positions, `height × width`.
    pub const fn plane(&self) -> usize {
        self.height * self.width
    }

    fn validate(&self, op: &'static str) -> Result<()> {
        if self.is_empty() {
            return Err(FuseError::InvalidShape {
                op,
                msg: format!("every dimension must be positive, got {self}"),
            });
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    shape: Shape,
    values: Vec<f64>,
}

/// Right-hand operand of [`elementwise`].
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Grid(&'a Grid),
    Scalar(f64),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Scale,
    Abs,
}

impl Grid {
    pub fn new(shape: Shape, values: Vec<f64>) -> Result<Self> {
        shape.validate("Grid::new")?;
        if values.len() != shape.len() {
            return Err(FuseError::InvalidShape {
                op: "Grid::new",
                msg: format!("{shape} needs {} values, got {}", shape.len(), values.len()),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FuseError::param(format!(
                "grid value at index {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        assert!(!shape.is_empty(), "grid dimensions must be positive");
        Self {
            shape,
            values: vec![value; shape.len()],
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        assert!(!shape.is_empty(), "grid dimensions must be positive");
        let mut values = Vec::with_capacity(shape.len());
        for c in 0..shape.channels {
            for y in 0..shape.height {
                for x in 0..shape.width {
                    values.push(f(c, y, x));
                }
            }
        }
        Self { shape, values }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.shape.height + y) * self.shape.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.values[self.index(c, y, x)]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.shape.plane();
        &self.values[c * n..(c + 1) * n]
    }

    pub(crate) fn ensure_same_shape(&self, other: &Grid, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(FuseError::Dimension {
                op,
                left: self.shape,
                right: other.shape,
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            shape: self.shape,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Grid, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Grid> {
        self.ensure_same_shape(other, op)?;
        Ok(Grid {
            shape: self.shape,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Grid) -> Result<Grid> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Grid) -> Result<Grid> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Grid) -> Result<Grid> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Grid {
        self.map(|v| v * s)
    }

    pub fn abs(&self) -> Grid {
        self.map(f64::abs)
    }

    pub fn max_abs_diff(&self, other: &Grid) -> Result<f64> {
        self.ensure_same_shape(other, "max_abs_diff")?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Generic entry point over the elementwise kernels.
///
/// `Add`, `Sub` and `Mul` accept a grid or a scalar operand, `Scale` needs a
/// scalar and `Abs` ignores the operand.
pub fn elementwise(op: ElementwiseOp, a: &Grid, b: Operand<'_>) -> Result<Grid> {
    use ElementwiseOp::*;
    match (op, b) {
        (Add, Operand::Grid(g)) => a.add(g),
        (Sub, Operand::Grid(g)) => a.sub(g),
        (Mul, Operand::Grid(g)) => a.mul(g),
        (Add, Operand::Scalar(s)) => Ok(a.map(|v| v + s)),
        (Sub, Operand::Scalar(s)) => Ok(a.map(|v| v - s)),
        (Mul | Scale, Operand::Scalar(s)) => Ok(a.scale(s)),
        (Abs, _) => Ok(a.abs()),
        (op, _) => Err(FuseError::param(format!(
            "{op:?} needs a {} operand",
            match op {
                Scale => "scalar",
                _ => "grid or scalar",
            }
        ))),
    }
}
