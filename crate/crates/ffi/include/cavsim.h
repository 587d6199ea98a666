#ifndef CAVSIM_H
#define CAVSIM_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CavsimStatus {
  CAVSIM_STATUS_OK = 0,
  CAVSIM_STATUS_NULL_POINTER = 1,
  CAVSIM_STATUS_INVALID_ARGUMENT = 2,
  CAVSIM_STATUS_CONFIG = 3,
  CAVSIM_STATUS_IO = 4,
  CAVSIM_STATUS_TRUNCATION = 5,
  CAVSIM_STATUS_NUMERICAL = 6,
  CAVSIM_STATUS_PANIC = 7,
} CavsimStatus;

/**
 * Opaque detuning schedule.
 */
typedef struct CavsimShaping CavsimShaping;

/**
 * Postselection summary; fidelities are NaN when nothing survived.
 */
typedef struct CavsimPostselectStats {
  uintptr_t trajectories;
  uintptr_t survivors;
  double fraction;
  double fraction_std_err;
  double mean_fidelity;
  double fidelity_variance;
  double closed_form_fidelity;
  uintptr_t tail_flags;
} CavsimPostselectStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into the library on the same thread.
 */
const char *cavsim_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cavsim_version(void);

/**
 * Fidelity of the state after `n` instantaneous position jumps from vacuum
 * with the even or odd cat of the same parity.
 */
enum CavsimStatus cavsim_css_fidelity_closed(uint32_t n, double *out);

/**
 * Builds the detuning schedule that makes the reduced readout model emit
 * `|xi_k|^2` on a grid starting at 0 with step `dt`. `eliminated_rate`
 * selects the rate prefactor 4 instead of 2.
 *
 * # Safety
 * `xi` must point to `len` readable doubles and `out` to a writable pointer.
 */
enum CavsimStatus cavsim_shaping_new(double g,
                                     double kappa_sc,
                                     const double *xi,
                                     uintptr_t len,
                                     double dt,
                                     bool eliminated_rate,
                                     struct CavsimShaping **out);

/**
 * Number of grid points, or 0 for NULL.
 *
 * # Safety
 * `h` must be NULL or a live handle.
 */
uintptr_t cavsim_shaping_len(const struct CavsimShaping *h);

/**
 * Number of grid points where the demanded rate was clipped.
 *
 * # Safety
 * `h` must be NULL or a live handle.
 */
uintptr_t cavsim_shaping_clip_count(const struct CavsimShaping *h);

/**
 * Copies the detuning (and optionally the realized rate) into caller buffers
 * of `len` doubles; `len` must equal [`cavsim_shaping_len`].
 *
 * # Safety
 * `h` must be a live handle; non-NULL buffers must hold `len` doubles.
 */
enum CavsimStatus cavsim_shaping_copy(const struct CavsimShaping *h,
                                      double *detuning,
                                      double *realized_rate,
                                      uintptr_t len);

/**
 * # Safety
 * `h` must be NULL or a handle not yet freed.
 */
void cavsim_shaping_free(struct CavsimShaping *h);

/**
 * Generates `trajectories` postselection attempts for `n_target` position
 * detections. A `max_gap` that is not positive disables gating. Times are
 * in units of `1/gamma`.
 *
 * # Safety
 * `out` must be writable.
 */
enum CavsimStatus cavsim_postselect(double lambda,
                                    double kappa_h,
                                    uintptr_t dim,
                                    uint32_t n_target,
                                    uintptr_t trajectories,
                                    double horizon,
                                    double dt,
                                    uint64_t seed,
                                    double max_gap,
                                    struct CavsimPostselectStats *out);

/**
 * Runs a JSON experiment config. `seed < 0` keeps the config's seed;
 * `out_dir` may be NULL to keep the config's output directory.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `out_dir` NULL or one.
 */
enum CavsimStatus cavsim_run_config(const char *config_path, int64_t seed, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAVSIM_H */
