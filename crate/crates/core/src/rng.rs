//! Seeded noise source.
//!
//! All randomness comes from ChaCha20 (a counter-based stream cipher, as
//! implemented by `rand_chacha`), keyed from a single `u64` seed through
//! `SeedableRng::seed_from_u64`. Standard normals are drawn with
//! `rand_distr::StandardNormal` (ziggurat). Both are pure integer/IEEE-754
//! arithmetic, so a fixed seed yields the same draws on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::grid::{Grid, Shape};

pub type NoiseRng = ChaCha20Rng;

pub fn seeded(seed: u64) -> NoiseRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Grid of i.i.d. `N(0, 1)` draws in row-major order.
pub fn standard_normal_grid(rng: &mut NoiseRng, shape: Shape) -> Grid {
    let values = (0..shape.len()).map(|_| StandardNormal.sample(rng)).collect();
    Grid::new(shape, values).expect("normal draws are finite")
}
