//! Loop-per-element reference implementations used as oracles, plus random
//! fixture helpers. Nothing here calls into the library's numeric code.
#![allow(dead_code)]

use fuse_core::{Grid, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_grid(r: &mut ChaCha8Rng, shape: Shape, lo: f64, hi: f64) -> Grid {
    let values = (0..shape.len()).map(|_| r.random_range(lo..hi)).collect();
    Grid::new(shape, values).unwrap()
}

pub fn idx(shape: Shape, c: usize, y: usize, x: usize) -> usize {
    (c * shape.height + y) * shape.width + x
}

pub fn naive_cfg(cond: &[f64], uncond: &[f64], s: f64) -> Vec<f64> {
    let mut out = vec![0.0; cond.len()];
    for i in 0..cond.len() {
        out[i] = uncond[i] + s * (cond[i] - uncond[i]);
    }
    out
}

/// Normalized Gaussian weights on a `(2r+1)^2` stencil, row-major.
pub fn naive_kernel(r: usize, sigma: f64) -> Vec<f64> {
    let side = 2 * r + 1;
    let mut w = vec![0.0; side * side];
    let mut total = 0.0;
    for i in 0..side {
        for j in 0..side {
            let dy = i as f64 - r as f64;
            let dx = j as f64 - r as f64;
            w[i * side + j] = (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
            total += w[i * side + j];
        }
    }
    for v in w.iter_mut() {
        *v /= total;
    }
    w
}

/// `Blur(mean_c |cond - uncond|)` with edge-replicated borders.
pub fn naive_salience(cond: &Grid, uncond: &Grid, blur: Option<(usize, f64)>) -> Vec<f64> {
    let s = cond.shape();
    let (h, w) = (s.height, s.width);
    let mut gap = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for c in 0..s.channels {
                let i = idx(s, c, y, x);
                acc += (cond.values()[i] - uncond.values()[i]).abs();
            }
            gap[y * w + x] = acc / s.channels as f64;
        }
    }
    let Some((r, sigma)) = blur else {
        return gap;
    };
    let k = naive_kernel(r, sigma);
    let side = 2 * r + 1;
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for i in 0..side {
                for j in 0..side {
                    let yy = (y as isize + i as isize - r as isize).clamp(0, h as isize - 1) as usize;
                    let xx = (x as isize + j as isize - r as isize).clamp(0, w as isize - 1) as usize;
                    acc += k[i * side + j] * gap[yy * w + xx];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

pub fn naive_softmax(map: &[f64], k: f64) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    for &v in map {
        if k * v > m {
            m = k * v;
        }
    }
    let mut total = 0.0;
    let mut out = vec![0.0; map.len()];
    for i in 0..map.len() {
        out[i] = (k * map[i] - m).exp();
        total += out[i];
    }
    for v in out.iter_mut() {
        *v /= total;
    }
    out
}

pub fn naive_argmax(g: &[f64], e: &[f64]) -> Vec<u8> {
    let mut out = vec![0u8; g.len()];
    for i in 0..g.len() {
        if g[i] >= e[i] {
            out[i] = 1;
        }
    }
    out
}

/// Per-pixel mask broadcast over channels.
pub fn naive_blend(g: &Grid, e: &Grid, mask: &[u8]) -> Vec<f64> {
    let s = g.shape();
    let mut out = vec![0.0; s.len()];
    for c in 0..s.channels {
        for y in 0..s.height {
            for x in 0..s.width {
                let i = idx(s, c, y, x);
                let m = mask[y * s.width + x] as f64;
                out[i] = m * g.values()[i] + (1.0 - m) * e.values()[i];
            }
        }
    }
    out
}

pub fn naive_ddim(x: &[f64], eps: &[f64], ab_t: f64, ab_prev: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for i in 0..x.len() {
        let x0 = (x[i] - (1.0 - ab_t).sqrt() * eps[i]) / ab_t.sqrt();
        out[i] = ab_prev.sqrt() * x0 + (1.0 - ab_prev).sqrt() * eps[i];
    }
    out
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Prints the one-line verdict and fails the test on `FAIL`.
pub fn verdict(criterion: u32, name: &str, ok: bool, detail: &str) {
    println!(
        "criterion {criterion} [{name}]: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} [{name}] failed: {detail}");
}
