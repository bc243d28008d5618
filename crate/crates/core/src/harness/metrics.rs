//! Per-run scores: final-sample moments, histogram KL against an analytic
//! target, and mask coverage and stability along the trajectory.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::config::Metric;
use crate::error::{FuseError, Result};
use crate::grid::{BlendMask, Grid};
use crate::predictor::SceneEntry;
use crate::sampler::Trajectory;

pub const KL_BINS: usize = 64;
/// Histograms cover `[-KL_RANGE, KL_RANGE]` standard deviations; the two
/// edge bins absorb the tails.
pub const KL_RANGE: f64 = 4.0;
pub const KL_SMOOTHING: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub t: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    /// Channel-wise mean of `x_0`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channel_mean: Vec<f64>,
    /// Channel-wise population std of `x_0`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channel_std: Vec<f64>,
    /// KL of the standardized `x_0` residual histogram from `N(0, 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl: Option<f64>,
    /// Share of `M = 1` pixels at each recorded step, from `t = T` down.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coverage: Vec<CoveragePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage_mean: Option<f64>,
    /// Mean share of pixels whose mask value changes between consecutive steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_change: Option<f64>,
    /// `1 - mask_change`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<f64>,
}

/// Bin index of a standardized value.
fn bin_of(z: f64) -> usize {
    let w = 2.0 * KL_RANGE / KL_BINS as f64;
    let i = ((z + KL_RANGE) / w).floor();
    i.clamp(0.0, (KL_BINS - 1) as f64) as usize
}

/// Standard normal mass of every bin, tails folded into the edge bins.
pub fn reference_masses() -> Vec<f64> {
    let n = Normal::standard();
    let w = 2.0 * KL_RANGE / KL_BINS as f64;
    (0..KL_BINS)
        .map(|i| {
            let lo = if i == 0 { 0.0 } else { n.cdf(-KL_RANGE + w * i as f64) };
            let hi = if i == KL_BINS - 1 {
                1.0
            } else {
                n.cdf(-KL_RANGE + w * (i + 1) as f64)
            };
            hi - lo
        })
        .collect()
}

/// `KL(p || q)` of the smoothed histogram of standardized values `z` against
/// the standard normal.
pub fn histogram_kl(z: impl IntoIterator<Item = f64>) -> Result<f64> {
    let mut counts = vec![0usize; KL_BINS];
    let mut n = 0usize;
    for v in z {
        if !v.is_finite() {
            return Err(FuseError::param("non-finite residual in KL histogram"));
        }
        counts[bin_of(v)] += 1;
        n += 1;
    }
    if n == 0 {
        return Err(FuseError::param("KL needs at least one sample"));
    }
    let q = reference_masses();
    let denom = n as f64 + KL_SMOOTHING * KL_BINS as f64;
    let kl: f64 = counts
        .iter()
        .zip(&q)
        .map(|(&c, &qi)| {
            let p = (c as f64 + KL_SMOOTHING) / denom;
            p * (p / qi).ln()
        })
        .sum();
    // Rounding can push an exact match a hair below zero.
    Ok(kl.max(0.0))
}

fn check_entry(x0: &Grid, target: &SceneEntry) -> Result<()> {
    if x0.shape() != target.mean.shape() {
        return Err(FuseError::Dimension {
            op: "metrics",
            left: x0.shape(),
            right: target.mean.shape(),
        });
    }
    Ok(())
}

fn standardized<'a>(x0: &'a Grid, target: &'a SceneEntry) -> impl Iterator<Item = f64> + 'a {
    x0.values()
        .iter()
        .zip(target.mean.values().iter().zip(target.std.values()))
        .map(|(x, (m, s))| (x - m) / s)
}

/// KL of the residuals of one sample, pooled over pixels.
pub fn sample_kl(x0: &Grid, target: &SceneEntry) -> Result<f64> {
    check_entry(x0, target)?;
    histogram_kl(standardized(x0, target))
}

/// Per-pixel KL over many samples (one histogram per pixel across the
/// samples), averaged over pixels.
pub fn per_pixel_kl(samples: &[Grid], target: &SceneEntry) -> Result<f64> {
    let Some(first) = samples.first() else {
        return Err(FuseError::param("KL needs at least one sample"));
    };
    for s in samples {
        check_entry(s, target)?;
    }
    let len = first.shape().len();
    let mut total = 0.0;
    for i in 0..len {
        let (m, s) = (target.mean.values()[i], target.std.values()[i]);
        total += histogram_kl(samples.iter().map(|x| (x.values()[i] - m) / s))?;
    }
    Ok(total / len as f64)
}

/// KL of every pixel of every sample, all residuals pooled.
pub fn pooled_kl(samples: &[Grid], target: &SceneEntry) -> Result<f64> {
    for s in samples {
        check_entry(s, target)?;
    }
    histogram_kl(samples.iter().flat_map(|x| standardized(x, target)))
}

pub fn channel_moments(x: &Grid) -> (Vec<f64>, Vec<f64>) {
    let shape = x.shape();
    let n = shape.plane() as f64;
    (0..shape.channels)
        .map(|c| {
            let ch = x.channel(c);
            let mean = ch.iter().sum::<f64>() / n;
            let var = ch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .unzip()
}

/// Mean fraction of pixels that flip between consecutive masks; `None`
/// with fewer than two masks.
pub fn mask_change_rate(masks: &[&BlendMask]) -> Option<f64> {
    if masks.len() < 2 {
        return None;
    }
    let total: f64 = masks
        .windows(2)
        .map(|w| {
            let flips = w[0].values().iter().zip(w[1].values()).filter(|(a, b)| a != b).count();
            flips as f64 / w[0].values().len() as f64
        })
        .sum();
    Some(total / (masks.len() - 1) as f64)
}

/// Scores a finished trajectory against `target`. Coverage and stability
/// need per-step diagnostics and are left empty when none were recorded.
pub fn compute_metrics(traj: &Trajectory, target: &SceneEntry, metrics: &[Metric]) -> Result<MetricReport> {
    if !traj.is_complete() {
        return Err(FuseError::param(format!(
            "trajectory is incomplete ({} states, first t={:?})",
            traj.len(),
            traj.states().first().map(|s| s.t)
        )));
    }
    let x0 = traj.final_sample().expect("complete trajectory ends at t=0");
    check_entry(x0, target)?;
    let mut report = MetricReport::default();
    if metrics.contains(&Metric::Moments) {
        (report.channel_mean, report.channel_std) = channel_moments(x0);
    }
    if metrics.contains(&Metric::Kl) {
        report.kl = Some(sample_kl(x0, target)?);
    }
    let masks: Vec<(usize, &BlendMask)> = traj
        .states()
        .iter()
        .filter_map(|s| s.diagnostics.as_ref().map(|d| (s.t, &d.mask)))
        .collect();
    if metrics.contains(&Metric::Coverage) && !masks.is_empty() {
        report.coverage = masks
            .iter()
            .map(|&(t, m)| CoveragePoint {
                t,
                coverage: m.coverage(),
            })
            .collect();
        report.coverage_mean = Some(report.coverage.iter().map(|c| c.coverage).sum::<f64>() / masks.len() as f64);
    }
    if metrics.contains(&Metric::Stability) {
        let only: Vec<&BlendMask> = masks.iter().map(|(_, m)| *m).collect();
        report.mask_change = mask_change_rate(&only);
        report.stability = report.mask_change.map(|c| 1.0 - c);
    }
    Ok(report)
}
