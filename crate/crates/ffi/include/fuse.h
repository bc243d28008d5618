#ifndef FUSE_H
#define FUSE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum {
  FUSE_STATUS_OK = 0,
  FUSE_STATUS_NULL_POINTER = 1,
  FUSE_STATUS_DIMENSION = 2,
  FUSE_STATUS_PARAMETER = 3,
  FUSE_STATUS_CONDITION = 4,
  FUSE_STATUS_LOAD = 5,
  FUSE_STATUS_CONFIG = 6,
  FUSE_STATUS_IO = 7,
  FUSE_STATUS_PANIC = 8,
} FuseStatus;

/**
 * Opaque dense grid.
 */
typedef struct FuseGrid FuseGrid;

/**
 * Opaque noise predictor.
 */
typedef struct FusePredictor FusePredictor;

/**
 * Opaque noise schedule.
 */
typedef struct FuseSchedule FuseSchedule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread; empty after a
 * successful call. Valid until the next call on the same thread.
 */
const char *fuse_last_error(void);

/**
 * New grid copied from `data` (`channels*height*width` doubles), or zeros
 * when `data` is null.
 *
 * # Safety
 * `data` must be null or point to that many doubles; `out` must be valid.
 */
FuseStatus fuse_grid_new(size_t channels,
                         size_t height,
                         size_t width,
                         const double *data,
                         FuseGrid **out);

/**
 * # Safety
 * `grid` must be null or a pointer returned by this library, freed once.
 */
void fuse_grid_free(FuseGrid *grid);

/**
 * # Safety
 * `grid` must be valid; the out pointers may be null.
 */
FuseStatus fuse_grid_shape(const FuseGrid *grid, size_t *channels, size_t *height, size_t *width);

/**
 * Number of values in `grid`, 0 for null.
 *
 * # Safety
 * `grid` must be null or valid.
 */
size_t fuse_grid_len(const FuseGrid *grid);

/**
 * Borrowed pointer to the values, valid while `grid` lives; null for null.
 *
 * # Safety
 * `grid` must be null or valid.
 */
const double *fuse_grid_data(const FuseGrid *grid);

/**
 * `kind`: 0 linear, 1 cosine.
 *
 * # Safety
 * `out` must be valid.
 */
FuseStatus fuse_schedule_new(uint32_t kind, size_t steps, FuseSchedule **out);

/**
 * # Safety
 * `schedule` must be null or returned by this library, freed once.
 */
void fuse_schedule_free(FuseSchedule *schedule);

/**
 * # Safety
 * `schedule` must be null or valid.
 */
size_t fuse_schedule_steps(const FuseSchedule *schedule);

/**
 * # Safety
 * `schedule` and `out` must be valid.
 */
FuseStatus fuse_schedule_alpha_bar(const FuseSchedule *schedule, size_t t, double *out);

/**
 * Gaussian scene from a JSON document.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be valid.
 */
FuseStatus fuse_predictor_load_scene(const char *path, FusePredictor **out);

/**
 * Tabulated affine predictor file.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be valid.
 */
FuseStatus fuse_predictor_load_tabulated(const char *path, FusePredictor **out);

/**
 * One of the scenes compiled into the library, e.g. `two_region_general`.
 *
 * # Safety
 * `name` must be a nul-terminated string; `out` must be valid.
 */
FuseStatus fuse_predictor_builtin(const char *name, FusePredictor **out);

/**
 * # Safety
 * `predictor` must be null or returned by this library, freed once.
 */
void fuse_predictor_free(FusePredictor *predictor);

/**
 * Noise prediction at timestep `t` of `schedule`; `condition` is a
 * condition id or `"NULL"`.
 *
 * # Safety
 * All pointers must be valid; `condition` nul-terminated.
 */
FuseStatus fuse_predictor_predict(const FusePredictor *predictor,
                                  const FuseGrid *x_t,
                                  const FuseSchedule *schedule,
                                  size_t t,
                                  const char *condition,
                                  FuseGrid **out);

/**
 * Guided noise `uncond + scale * (cond - uncond)`.
 *
 * # Safety
 * All pointers must be valid.
 */
FuseStatus fuse_cfg(const FuseGrid *eps_cond,
                    const FuseGrid *eps_uncond,
                    double scale,
                    FuseGrid **out);

/**
 * Single-channel salience map of the gap between two predictions. With
 * `blur` zero the map is left unblurred and `radius`/`sigma` are ignored.
 * `channel_max` nonzero reduces channels by max instead of mean.
 *
 * # Safety
 * All pointers must be valid.
 */
FuseStatus fuse_salience(const FuseGrid *eps_cond,
                         const FuseGrid *eps_uncond,
                         int32_t blur,
                         size_t radius,
                         double sigma,
                         int32_t channel_max,
                         FuseGrid **out);

/**
 * Spatial softmax with temperature `k` of a single-channel non-negative map.
 *
 * # Safety
 * All pointers must be valid.
 */
FuseStatus fuse_spatial_softmax(const FuseGrid *map, double k, FuseGrid **out);

/**
 * 0/1 mask, 1 where the general map is at least the expert map.
 *
 * # Safety
 * All pointers must be valid.
 */
FuseStatus fuse_argmax_mask(const FuseGrid *general, const FuseGrid *expert, FuseGrid **out);

/**
 * `mask * general + (1 - mask) * expert`, the single-channel 0/1 mask
 * broadcast over channels.
 *
 * # Safety
 * All pointers must be valid.
 */
FuseStatus fuse_mask_blend(const FuseGrid *general,
                           const FuseGrid *expert,
                           const FuseGrid *mask,
                           FuseGrid **out);

/**
 * Deterministic update from `x_t` to `x_{t-1}`.
 *
 * # Safety
 * All pointers must be valid.
 */
FuseStatus fuse_ddim_step(const FuseGrid *x_t,
                          const FuseGrid *eps_hat,
                          const FuseSchedule *schedule,
                          size_t t,
                          FuseGrid **out);

/**
 * Samples the `fusion` section of an experiment file once with its own
 * seed and returns `x_0`. Relative model paths resolve against the file's
 * directory; nothing is written to disk.
 *
 * # Safety
 * `config_path` must be nul-terminated; `out` must be valid.
 */
FuseStatus fuse_run_config(const char *config_path, FuseGrid **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FUSE_H */
