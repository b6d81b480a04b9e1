#ifndef VOLCAST_H
#define VOLCAST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum VcStatus {
  VC_STATUS_OK = 0,
  VC_STATUS_NULL_POINTER = 1,
  VC_STATUS_INVALID_ARGUMENT = 2,
  VC_STATUS_SHAPE = 3,
  VC_STATUS_IO = 4,
  VC_STATUS_FORMAT = 5,
  VC_STATUS_CONFIG = 6,
  VC_STATUS_DIVERGED = 7,
  VC_STATUS_NON_FINITE = 8,
  VC_STATUS_PANIC = 9,
} VcStatus;

/**
 * Fitted fields handle.
 */
typedef struct VcFit VcFit;

/**
 * Reflectivity sequence handle.
 */
typedef struct VcSequence VcSequence;

/**
 * Geographic metadata of a grid; the level altitudes are passed separately.
 */
typedef struct VcGridMeta {
  double lat0;
  double lon0;
  double dlat;
  double dlon;
  double frame_interval;
} VcGridMeta;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *vc_version(void);

/**
 * Message of the last failed call on this thread (empty if none). Valid
 * until the next failing call on the same thread.
 */
const char *vc_last_error(void);

/**
 * Build a sequence from T·D·H·W reflectivities in T, D, H, W order.
 * `mask` holds one byte per voxel (nonzero = valid) and may be null for a
 * fully valid sequence. Valid voxels are clipped to [-10, 75] dBZ.
 *
 * # Safety
 * `data` and a non-null `mask` must point to T·D·H·W elements, `z_levels`
 * to D elements, `meta` and `out` must be valid pointers.
 */
enum VcStatus vc_sequence_new(size_t t,
                              size_t d,
                              size_t h,
                              size_t w,
                              const float *data,
                              const uint8_t *mask,
                              const struct VcGridMeta *meta,
                              const float *z_levels,
                              struct VcSequence **out);

/**
 * Read an NV3D file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VcStatus vc_sequence_read(const char *path, struct VcSequence **out);

/**
 * Write an NV3D file.
 *
 * # Safety
 * `seq` must be a live handle and `path` a NUL-terminated string.
 */
enum VcStatus vc_sequence_write(const struct VcSequence *seq, const char *path);

/**
 * Store T, D, H, W into `dims[0..4]`.
 *
 * # Safety
 * `seq` must be a live handle and `dims` point to four writable elements.
 */
enum VcStatus vc_sequence_dims(const struct VcSequence *seq, size_t *dims);

/**
 * Copy the reflectivities into `buf`, which must hold exactly `len` =
 * T·D·H·W values.
 *
 * # Safety
 * `seq` must be a live handle and `buf` point to `len` writable floats.
 */
enum VcStatus vc_sequence_copy_data(const struct VcSequence *seq, float *buf, size_t len);

/**
 * Release a sequence. Null is ignored.
 *
 * # Safety
 * `seq` must be null or a handle not yet freed.
 */
void vc_sequence_free(struct VcSequence *seq);

/**
 * Synthetic case by name (`translation`, `rotation`, `growth`,
 * `diffusion`). A NaN `param` selects the case default.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VcStatus vc_synth(const char *name,
                       size_t d,
                       size_t h,
                       size_t w,
                       size_t frames,
                       double param,
                       uint64_t seed,
                       struct VcSequence **out);

/**
 * Fit physical fields to `seq`. `config_toml` is a run configuration
 * document or null for defaults.
 *
 * # Safety
 * `seq` must be a live handle, `config_toml` null or a NUL-terminated
 * string, and `out` a valid pointer.
 */
enum VcStatus vc_fit(const struct VcSequence *seq, const char *config_toml, struct VcFit **out);

/**
 * Best total loss and the epoch it was reached at.
 *
 * # Safety
 * `fit` must be a live handle; `loss` and `epoch` valid pointers.
 */
enum VcStatus vc_fit_best(const struct VcFit *fit, double *loss, size_t *epoch);

/**
 * Release a fit. Null is ignored.
 *
 * # Safety
 * `fit` must be null or a handle not yet freed.
 */
void vc_fit_free(struct VcFit *fit);

/**
 * Roll `horizon` frames forward from the last frame of `past` with the
 * final fitted fields held constant.
 *
 * # Safety
 * `fit` and `past` must be live handles, `config_toml` null or a
 * NUL-terminated string, and `out` a valid pointer.
 */
enum VcStatus vc_forecast(const struct VcFit *fit,
                          const struct VcSequence *past,
                          size_t horizon,
                          const char *config_toml,
                          struct VcSequence **out);

/**
 * Neighborhood CSI of two H×W row-major fields.
 *
 * # Safety
 * `forecast` and `truth` must point to H·W values; `score` must be valid.
 */
enum VcStatus vc_csi(const double *forecast,
                     const double *truth,
                     size_t h,
                     size_t w,
                     double threshold,
                     size_t radius,
                     double *score);

/**
 * Convert a displacement in cells per frame to (u, v) in m/s.
 *
 * # Safety
 * `meta`, `u` and `v` must be valid pointers.
 */
enum VcStatus vc_cells_to_ms(double disp_y,
                             double disp_x,
                             double lat,
                             const struct VcGridMeta *meta,
                             double *u,
                             double *v);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOLCAST_H */
