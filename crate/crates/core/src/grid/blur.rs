use super::Grid;
use crate::error::{FuseError, Result};

/// Square `(2r+1) × (2r+1)` smoothing kernel with weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    radius: usize,
    sigma: f64,
    weights: Vec<f64>,
}

impl BlurKernel {
    pub const DEFAULT_RADIUS: usize = 2;
    pub const DEFAULT_SIGMA: f64 = 1.0;

    /// Sampled isotropic Gaussian, normalized so the weights sum to one.
    pub fn gaussian(radius: usize, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(FuseError::param(format!("blur sigma must be positive, got {sigma}")));
        }
        let side = 2 * radius + 1;
        let r = radius as isize;
        let denom = 2.0 * sigma * sigma;
        let mut weights = Vec::with_capacity(side * side);
        for dy in -r..=r {
            for dx in -r..=r {
                let d2 = (dy * dy + dx * dx) as f64;
                weights.push((-d2 / denom).exp());
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { radius, sigma, weights })
    }

    pub fn identity() -> Self {
        Self {
            radius: 0,
            sigma: 1.0,
            weights: vec![1.0],
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    /// Weights in row-major order, offset `(dy, dx)` from `-r` to `r`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, dy: isize, dx: isize) -> f64 {
        let r = self.radius as isize;
        self.weights[((dy + r) * (2 * r + 1) + dx + r) as usize]
    }
}

impl Default for BlurKernel {
    fn default() -> Self {
        Self::gaussian(Self::DEFAULT_RADIUS, Self::DEFAULT_SIGMA).expect("default kernel is valid")
    }
}

/// Per-channel 2D convolution with edge-replicate padding.
pub fn gaussian_blur(grid: &Grid, kernel: &BlurKernel) -> Result<Grid> {
    let shape = grid.shape();
    if kernel.radius >= shape.height.min(shape.width) {
        return Err(FuseError::InvalidShape {
            op: "gaussian_blur",
            msg: format!(
                "kernel radius {} needs a grid larger than {}x{}",
                kernel.radius, shape.height, shape.width
            ),
        });
    }
    let (h, w) = (shape.height as isize, shape.width as isize);
    let r = kernel.radius as isize;
    let side = kernel.side();
    let mut out = Vec::with_capacity(shape.len());
    for c in 0..shape.channels {
        let plane = grid.channel(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (ky, dy) in (-r..=r).enumerate() {
                    let sy = (y + dy).clamp(0, h - 1) as usize;
                    let row = &plane[sy * shape.width..(sy + 1) * shape.width];
                    let krow = &kernel.weights[ky * side..(ky + 1) * side];
                    for (kx, dx) in (-r..=r).enumerate() {
                        let sx = (x + dx).clamp(0, w - 1) as usize;
                        acc += krow[kx] * row[sx];
                    }
                }
                out.push(acc);
            }
        }
    }
    Grid::new(shape, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Shape;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        for (r, s) in [(0, 1.0), (1, 0.5), (2, 1.0), (3, 2.5)] {
            let k = BlurKernel::gaussian(r, s).unwrap();
            let total: f64 = k.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            let r = r as isize;
            for dy in -r..=r {
                for dx in -r..=r {
                    assert_eq!(k.weight(dy, dx), k.weight(-dy, dx));
                    assert_eq!(k.weight(dy, dx), k.weight(dy, -dx));
                }
            }
        }
    }

    #[test]
    fn constant_grid_is_preserved() {
        let g = Grid::filled(Shape::new(2, 5, 6), 0.7);
        let out = gaussian_blur(&g, &BlurKernel::default()).unwrap();
        assert!(out.max_abs_diff(&g).unwrap() < 1e-15);
    }

    #[test]
    fn identity_kernel() {
        let g = Grid::from_fn(Shape::new(1, 4, 3), |_, y, x| (y * 3 + x) as f64 - 2.5);
        assert_eq!(gaussian_blur(&g, &BlurKernel::identity()).unwrap(), g);
    }

    #[test]
    fn impulse_reproduces_kernel() {
        // hand expansion: with the impulse at the centre, out(y,x) picks the
        // single offset that lands on (1,1), which is k(1-y, 1-x)
        let k = BlurKernel::gaussian(1, 1.0).unwrap();
        let g = Grid::from_fn(Shape::new(1, 3, 3), |_, y, x| if (y, x) == (1, 1) { 1.0 } else { 0.0 });
        let out = gaussian_blur(&g, &k).unwrap();
        let e = (-0.5f64).exp();
        let c = (-1.0f64).exp();
        let total = 1.0 + 4.0 * e + 4.0 * c;
        let expect = [c, e, c, e, 1.0, e, c, e, c].map(|v| v / total);
        for (o, x) in out.values().iter().zip(expect) {
            assert!((o - x).abs() < 1e-15);
        }
        for (o, w) in out.values().iter().zip(k.weights()) {
            assert!((o - w).abs() < 1e-15);
        }
    }

    #[test]
    fn radius_too_large() {
        let g = Grid::zeros(Shape::new(1, 2, 8));
        assert!(matches!(
            gaussian_blur(&g, &BlurKernel::gaussian(2, 1.0).unwrap()),
            Err(FuseError::InvalidShape { .. })
        ));
    }

    #[test]
    fn rejects_nonpositive_sigma() {
        assert!(BlurKernel::gaussian(2, 0.0).is_err());
        assert!(BlurKernel::gaussian(2, f64::NAN).is_err());
    }

    proptest::proptest! {
        #[test]
        fn blur_is_linear(
            a in proptest::collection::vec(-10f64..10.0, 2 * 6 * 7),
            b in proptest::collection::vec(-10f64..10.0, 2 * 6 * 7),
            alpha in -3f64..3.0,
            beta in -3f64..3.0,
        ) {
            let s = Shape::new(2, 6, 7);
            let (a, b) = (Grid::new(s, a).unwrap(), Grid::new(s, b).unwrap());
            let k = BlurKernel::default();
            let lhs = gaussian_blur(&a.scale(alpha).add(&b.scale(beta)).unwrap(), &k).unwrap();
            let rhs = gaussian_blur(&a, &k).unwrap().scale(alpha)
                .add(&gaussian_blur(&b, &k).unwrap().scale(beta)).unwrap();
            proptest::prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-9);
        }
    }
}
