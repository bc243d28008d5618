use crate::error::{FuseError, Result};
use crate::grid::{BlendMask, Grid, Shape};

/// `M ⊙ eps_g + (1 - M) ⊙ eps_e` with the `H × W` mask broadcast over
/// channels. The mask is binary, so each element is copied from one side.
pub fn mask_blend(eps_g: &Grid, eps_e: &Grid, mask: &BlendMask) -> Result<Grid> {
    eps_g.ensure_same_shape(eps_e, "mask_blend")?;
    let s = eps_g.shape();
    if (mask.height(), mask.width()) != (s.height, s.width) {
        return Err(FuseError::Dimension {
            op: "mask_blend",
            left: Shape::new(1, mask.height(), mask.width()),
            right: s,
        });
    }
    let plane = s.plane();
    let values = eps_g
        .values()
        .iter()
        .zip(eps_e.values())
        .enumerate()
        .map(|(i, (&g, &e))| if mask.selects_general(i % plane) { g } else { e })
        .collect();
    Grid::new(s, values)
}

/// `w * eps_g + (1 - w) * eps_e`.
pub fn weighted_sum_blend(eps_g: &Grid, eps_e: &Grid, w: f64) -> Result<Grid> {
    if !(0.0..=1.0).contains(&w) {
        return Err(FuseError::param(format!("weighted_sum weight {w} outside [0, 1]")));
    }
    let rest = 1.0 - w;
    eps_g.zip_with(eps_e, "weighted_sum_blend", |g, e| w * g + rest * e)
}

/// Blend with a user-supplied static mask.
pub fn fixed_mask_blend(eps_g: &Grid, eps_e: &Grid, mask: &BlendMask) -> Result<Grid> {
    mask_blend(eps_g, eps_e, mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s() -> Shape {
        Shape::new(2, 3, 4)
    }

    fn pair() -> (Grid, Grid) {
        (
            Grid::from_fn(s(), |c, y, x| (c * 12 + y * 4 + x) as f64 * 0.3 - 1.0),
            Grid::from_fn(s(), |c, y, x| -((c + y) as f64) / (x as f64 + 1.5)),
        )
    }

    #[test]
    fn weighted_sum_cases() {
        let (g, e) = pair();
        assert_eq!(weighted_sum_blend(&g, &e, 1.0).unwrap(), g);
        assert_eq!(weighted_sum_blend(&g, &e, 0.0).unwrap(), e);
        let z = weighted_sum_blend(&g, &g.scale(-1.0), 0.5).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let flat = weighted_sum_blend(&Grid::filled(s(), 4.0), &Grid::zeros(s()), 0.25).unwrap();
        assert_eq!(flat, Grid::filled(s(), 1.0));
    }

    #[test]
    fn weighted_sum_rejects_out_of_range() {
        let (g, e) = pair();
        assert!(matches!(weighted_sum_blend(&g, &e, 1.5), Err(FuseError::Parameter(_))));
        assert!(weighted_sum_blend(&g, &e, -0.1).is_err());
    }

    #[test]
    fn fixed_mask_cases() {
        let (g, e) = pair();
        assert_eq!(fixed_mask_blend(&g, &e, &BlendMask::filled(3, 4, true)).unwrap(), g);
        assert_eq!(fixed_mask_blend(&g, &e, &BlendMask::filled(3, 4, false)).unwrap(), e);

        let checker = BlendMask::new(3, 4, (0..12).map(|i| ((i / 4 + i % 4) % 2 == 0) as u8).collect()).unwrap();
        let out = fixed_mask_blend(&Grid::filled(s(), 1.0), &Grid::zeros(s()), &checker).unwrap();
        for c in 0..2 {
            for y in 0..3 {
                for x in 0..4 {
                    assert_eq!(out.get(c, y, x), ((y + x) % 2 == 0) as u8 as f64);
                }
            }
        }
    }

    #[test]
    fn mask_shape_mismatch() {
        let (g, e) = pair();
        assert!(matches!(
            fixed_mask_blend(&g, &e, &BlendMask::filled(4, 3, true)),
            Err(FuseError::Dimension { .. })
        ));
    }
}
