//! C ABI over `fuse-core`.
//!
//! Every object crosses the boundary as an opaque pointer owned by the
//! caller and released with the matching `*_free`. Every fallible call
//! returns a [`FuseStatus`]; on failure `fuse_last_error()` describes the
//! problem until the next call on the same thread. Grids are row-major
//! `channels x height x width` arrays of `double`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use fuse_core::grid::{argmax_mask, spatial_softmax, BlendMask, SalienceMap};
use fuse_core::guidance::{cfg, salience, ChannelAgg, GuidanceParams, SalienceParams};
use fuse_core::predictor::{GaussianSceneModel, TabulatedPredictor};
use fuse_core::sampler::{ddim_step, mask_blend, run_fusion};
use fuse_core::{
    fixtures, harness, BlurKernel, Condition, FuseError, Grid, NoisePredictor, Schedule, ScheduleKind, Shape,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FuseStatus {
    Ok = 0,
    NullPointer = 1,
    Dimension = 2,
    Parameter = 3,
    Condition = 4,
    Load = 5,
    Config = 6,
    Io = 7,
    Panic = 8,
}

/// Opaque dense grid.
pub struct FuseGrid(Grid);

/// Opaque noise schedule.
pub struct FuseSchedule(Schedule);

/// Opaque noise predictor.
pub struct FusePredictor(Arc<dyn NoisePredictor>);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes stripped"));
}

fn status_of(err: &FuseError) -> FuseStatus {
    match err.root() {
        FuseError::Dimension { .. } | FuseError::InvalidShape { .. } => FuseStatus::Dimension,
        FuseError::Parameter(_) => FuseStatus::Parameter,
        FuseError::Condition(_) => FuseStatus::Condition,
        FuseError::Load { .. } => FuseStatus::Load,
        FuseError::Config(_) => FuseStatus::Config,
        FuseError::Io { .. } => FuseStatus::Io,
        FuseError::Step { .. } => FuseStatus::Parameter,
    }
}

enum Failure {
    Null(&'static str),
    Core(FuseError),
}

impl From<FuseError> for Failure {
    fn from(e: FuseError) -> Self {
        Failure::Core(e)
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FuseStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FuseStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed as `{what}`"));
            FuseStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            FuseStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut *mut T, what: &'static str) -> Result<&'a mut *mut T, Failure> {
    let slot = p.as_mut().ok_or(Failure::Null(what))?;
    *slot = ptr::null_mut();
    Ok(slot)
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Core(FuseError::Parameter(format!("`{what}` is not valid UTF-8"))))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

fn map_of(grid: &Grid) -> Result<SalienceMap, FuseError> {
    SalienceMap::from_grid(grid.clone())
}

/// Message for the most recent failure on this thread; empty after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn fuse_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// New grid copied from `data` (`channels*height*width` doubles), or zeros
/// when `data` is null.
///
/// # Safety
/// `data` must be null or point to that many doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fuse_grid_new(
    channels: usize,
    height: usize,
    width: usize,
    data: *const f64,
    out: *mut *mut FuseGrid,
) -> FuseStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        let shape = Shape::new(channels, height, width);
        let values = if data.is_null() || shape.is_empty() {
            vec![0.0; shape.len()]
        } else {
            std::slice::from_raw_parts(data, shape.len()).to_vec()
        };
        let grid = Grid::new(shape, values)?;
        *slot = boxed(FuseGrid(grid));
        Ok(())
    })
}

/// # Safety
/// `grid` must be null or a pointer returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn fuse_grid_free(grid: *mut FuseGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// # Safety
/// `grid` must be valid; the out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn fuse_grid_shape(
    grid: *const FuseGrid,
    channels: *mut usize,
    height: *mut usize,
    width: *mut usize,
) -> FuseStatus {
    guard(|| {
        let s = deref(grid, "grid")?.0.shape();
        for (p, v) in [(channels, s.channels), (height, s.height), (width, s.width)] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Number of values in `grid`, 0 for null.
///
/// # Safety
/// `grid` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn fuse_grid_len(grid: *const FuseGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.values().len())
}

/// Borrowed pointer to the values, valid while `grid` lives; null for null.
///
/// # Safety
/// `grid` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn fuse_grid_data(grid: *const FuseGrid) -> *const f64 {
    grid.as_ref().map_or(ptr::null(), |g| g.0.values().as_ptr())
}

/// `kind`: 0 linear, 1 cosine.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fuse_schedule_new(kind: u32, steps: usize, out: *mut *mut FuseSchedule) -> FuseStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        let kind = match kind {
            0 => ScheduleKind::Linear,
            1 => ScheduleKind::Cosine,
            k => return Err(FuseError::Parameter(format!("unknown schedule kind {k}")).into()),
        };
        *slot = boxed(FuseSchedule(Schedule::new(kind, steps)?));
        Ok(())
    })
}

/// # Safety
/// `schedule` must be null or returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn fuse_schedule_free(schedule: *mut FuseSchedule) {
    if !schedule.is_null() {
        drop(Box::from_raw(schedule));
    }
}

/// # Safety
/// `schedule` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn fuse_schedule_steps(schedule: *const FuseSchedule) -> usize {
    schedule.as_ref().map_or(0, |s| s.0.steps())
}

/// # Safety
/// `schedule` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fuse_schedule_alpha_bar(schedule: *const FuseSchedule, t: usize, out: *mut f64) -> FuseStatus {
    guard(|| {
        let s = deref(schedule, "schedule")?;
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        *out = s.0.alpha_bar_at(t)?;
        Ok(())
    })
}

unsafe fn load_predictor(
    out: *mut *mut FusePredictor,
    load: impl FnOnce() -> Result<Arc<dyn NoisePredictor>, Failure>,
) -> FuseStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        *slot = boxed(FusePredictor(load()?));
        Ok(())
    })
}

/// Gaussian scene from a JSON document.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fuse_predictor_load_scene(path: *const c_char, out: *mut *mut FusePredictor) -> FuseStatus {
    load_predictor(out, || Ok(Arc::new(GaussianSceneModel::load(text(path, "path")?)?)))
}

/// Tabulated affine predictor file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fuse_predictor_load_tabulated(
    path: *const c_char,
    out: *mut *mut FusePredictor,
) -> FuseStatus {
    load_predictor(out, || Ok(Arc::new(TabulatedPredictor::load(text(path, "path")?)?)))
}

/// One of the scenes compiled into the library, e.g. `two_region_general`.
///
/// # Safety
/// `name` must be a nul-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fuse_predictor_builtin(name: *const c_char, out: *mut *mut FusePredictor) -> FuseStatus {
    load_predictor(out, || Ok(Arc::new(fixtures::builtin(text(name, "name")?)?)))
}

/// # Safety
/// `predictor` must be null or returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn fuse_predictor_free(predictor: *mut FusePredictor) {
    if !predictor.is_null() {
        drop(Box::from_raw(predictor));
    }
}

/// Noise prediction at timestep `t` of `schedule`; `condition` is a
/// condition id or `"NULL"`.
///
/// # Safety
/// All pointers must be valid; `condition` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn fuse_predictor_predict(
    predictor: *const FusePredictor,
    x_t: *const FuseGrid,
    schedule: *const FuseSchedule,
    t: usize,
    condition: *const c_char,
    out: *mut *mut FuseGrid,
) -> FuseStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        let p = deref(predictor, "predictor")?;
        let x = deref(x_t, "x_t")?;
        let s = deref(schedule, "schedule")?;
        let cond = Condition::new(text(condition, "condition")?);
        let eps = p.0.predict_noise(&x.0, s.0.step(t)?, &cond)?;
        *slot = boxed(FuseGrid(eps));
        Ok(())
    })
}

/// Guided noise `uncond + scale * (cond - uncond)`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fuse_cfg(
    eps_cond: *const FuseGrid,
    eps_uncond: *const FuseGrid,
    scale: f64,
    out: *mut *mut FuseGrid,
) -> FuseStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        let c = deref(eps_cond, "eps_cond")?;
        let u = deref(eps_uncond, "eps_uncond")?;
        *slot = boxed(FuseGrid(cfg(&c.0, &u.0, GuidanceParams::new(scale)?)?));
        Ok(())
    })
}

/// Single-channel salience map of the gap between two predictions. With
/// `blur` zero the map is left unblurred and `radius`/`sigma` are ignored.
/// `channel_max` nonzero reduces channels by max instead of mean.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fuse_salience(
    eps_cond: *const FuseGrid,
    eps_uncond: *const FuseGrid,
    blur: i32,
    radius: usize,
    sigma: f64,
    channel_max: i32,
    out: *mut *mut FuseGrid,
) -> FuseStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        let c = deref(eps_cond, "eps_cond")?;
        let u = deref(eps_uncond, "eps_uncond")?;
        let params = SalienceParams {
            blur: if blur != 0 {
                Some(BlurKernel::gaussian(radius, sigma)?)
            } else {
                None
            },
            channel_agg: if channel_max != 0 {
                ChannelAgg::Max
            } else {
                ChannelAgg::Mean
            },
        };
        *slot = boxed(FuseGrid(salience(&c.0, &u.0, &params)?.to_grid()));
        Ok(())
    })
}

/// Spatial softmax with temperature `k` of a single-channel non-negative map.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fuse_spatial_softmax(map: *const FuseGrid, k: f64, out: *mut *mut FuseGrid) -> FuseStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        let m = map_of(&deref(map, "map")?.0)?;
        if !k.is_finite() {
            return Err(FuseError::Parameter(format!("temperature must be finite, got {k}")).into());
        }
        *slot = boxed(FuseGrid(spatial_softmax(&m, k).to_grid()));
        Ok(())
    })
}

/// 0/1 mask, 1 where the general map is at least the expert map.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fuse_argmax_mask(
    general: *const FuseGrid,
    expert: *const FuseGrid,
    out: *mut *mut FuseGrid,
) -> FuseStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        let g = map_of(&deref(general, "general")?.0)?;
        let e = map_of(&deref(expert, "expert")?.0)?;
        *slot = boxed(FuseGrid(argmax_mask(&g, &e)?.to_grid()));
        Ok(())
    })
}

/// `mask * general + (1 - mask) * expert`, the single-channel 0/1 mask
/// broadcast over channels.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fuse_mask_blend(
    general: *const FuseGrid,
    expert: *const FuseGrid,
    mask: *const FuseGrid,
    out: *mut *mut FuseGrid,
) -> FuseStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        let g = deref(general, "general")?;
        let e = deref(expert, "expert")?;
        let m = BlendMask::from_grid(&deref(mask, "mask")?.0)?;
        *slot = boxed(FuseGrid(mask_blend(&g.0, &e.0, &m)?));
        Ok(())
    })
}

/// Deterministic update from `x_t` to `x_{t-1}`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fuse_ddim_step(
    x_t: *const FuseGrid,
    eps_hat: *const FuseGrid,
    schedule: *const FuseSchedule,
    t: usize,
    out: *mut *mut FuseGrid,
) -> FuseStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        let x = deref(x_t, "x_t")?;
        let e = deref(eps_hat, "eps_hat")?;
        let s = deref(schedule, "schedule")?;
        *slot = boxed(FuseGrid(ddim_step(&x.0, &e.0, &s.0, t)?));
        Ok(())
    })
}

/// Samples the `fusion` section of an experiment file once with its own
/// seed and returns `x_0`. Relative model paths resolve against the file's
/// directory; nothing is written to disk.
///
/// # Safety
/// `config_path` must be nul-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fuse_run_config(config_path: *const c_char, out: *mut *mut FuseGrid) -> FuseStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        let path = Path::new(text(config_path, "config_path")?);
        let spec = harness::parse_config(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let traj = run_fusion(&spec.fusion, base)?;
        let x0 = traj.final_sample().cloned().expect("finished trajectory ends at t=0");
        *slot = boxed(FuseGrid(x0));
        Ok(())
    })
}
