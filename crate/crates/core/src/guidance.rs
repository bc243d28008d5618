//! Classifier-free guidance and salience extraction from the gap between
//! conditional and unconditional noise predictions.

use crate::error::{FuseError, Result};
use crate::grid::{gaussian_blur, BlurKernel, Grid, SalienceMap};

pub const DEFAULT_GUIDANCE_SCALE: f64 = 7.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceParams {
    scale: f64,
}

impl GuidanceParams {
    pub fn new(scale: f64) -> Result<Self> {
        if !scale.is_finite() || scale < 0.0 {
            return Err(FuseError::param(format!(
                "guidance scale must be finite and >= 0, got {scale}"
            )));
        }
        Ok(Self { scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

impl Default for GuidanceParams {
    fn default() -> Self {
        Self {
            scale: DEFAULT_GUIDANCE_SCALE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelAgg {
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SalienceParams {
    /// `None` disables the blur.
    pub blur: Option<BlurKernel>,
    pub channel_agg: ChannelAgg,
}

impl SalienceParams {
    pub fn unblurred(channel_agg: ChannelAgg) -> Self {
        Self {
            blur: None,
            channel_agg,
        }
    }

    pub fn blur_enabled(&self) -> bool {
        self.blur.is_some()
    }
}

impl Default for SalienceParams {
    fn default() -> Self {
        Self {
            blur: Some(BlurKernel::default()),
            channel_agg: ChannelAgg::Mean,
        }
    }
}

/// Guided noise `uncond + s * (cond - uncond)`.
///
/// Evaluated as `s * cond + (1 - s) * uncond`, which returns `cond` and
/// `uncond` bit-exactly at `s = 1` and `s = 0`.
pub fn cfg(eps_cond: &Grid, eps_uncond: &Grid, params: GuidanceParams) -> Result<Grid> {
    let s = params.scale;
    let rest = 1.0 - s;
    eps_cond.zip_with(eps_uncond, "cfg", |c, u| s * c + rest * u)
}

/// `Blur(Abs(cond - uncond))`, after reducing the channel axis.
pub fn salience(eps_cond: &Grid, eps_uncond: &Grid, params: &SalienceParams) -> Result<SalienceMap> {
    let gap = eps_cond.zip_with(eps_uncond, "salience", |c, u| (c - u).abs())?;
    let shape = gap.shape();
    let mut plane = gap.channel(0).to_vec();
    for c in 1..shape.channels {
        for (acc, &v) in plane.iter_mut().zip(gap.channel(c)) {
            match params.channel_agg {
                ChannelAgg::Mean => *acc += v,
                ChannelAgg::Max => *acc = acc.max(v),
            }
        }
    }
    if params.channel_agg == ChannelAgg::Mean && shape.channels > 1 {
        let k = shape.channels as f64;
        plane.iter_mut().for_each(|v| *v /= k);
    }
    let mut map = Grid::new(crate::grid::Shape::new(1, shape.height, shape.width), plane)?;
    if let Some(kernel) = &params.blur {
        map = gaussian_blur(&map, kernel)?;
    }
    SalienceMap::from_grid(map)
}
