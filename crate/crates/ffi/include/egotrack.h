#ifndef EGOTRACK_H
#define EGOTRACK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Doubles in a flattened sigma-point set.
#define EGT_SIGMA_FLAT_LEN 21

typedef enum EgtLatePolicy {
  EGT_LATE_POLICY_REPLAY = 0,
  EGT_LATE_POLICY_IN_PLACE = 1,
} EgtLatePolicy;

typedef enum EgtStatus {
  EGT_STATUS_OK = 0,
  EGT_STATUS_NULL_POINTER = 1,
  EGT_STATUS_INVALID_ARGUMENT = 2,
  EGT_STATUS_INVALID_CONFIG = 3,
  // The bank has not received a measurement yet.
  EGT_STATUS_NOT_INITIALIZED = 4,
  // The measurement is older than the snapshot history and was dropped.
  EGT_STATUS_STALE = 5,
  // Nothing to summarize, e.g. no visible points.
  EGT_STATUS_EMPTY = 6,
  EGT_STATUS_NUMERICAL = 7,
  EGT_STATUS_PANIC = 8,
} EgtStatus;

typedef enum EgtInitType {
  EGT_INIT_TYPE_NEAR_OPTIMAL = 0,
  EGT_INIT_TYPE_FAILURE_REPLAY = 1,
} EgtInitType;

// Opaque filter bank. Create with [`egt_filter_bank_new`], release with
// [`egt_filter_bank_free`].
typedef struct EgtFilterBank EgtFilterBank;

// Pinhole intrinsics, image size and near plane.
typedef struct EgtCamera {
  double fx;
  double fy;
  double cx;
  double cy;
  uint32_t width;
  uint32_t height;
  double near_z;
} EgtCamera;

// Filter parameters. A non-positive `innovation_gate` disables the gate.
typedef struct EgtFilterConfig {
  double q_pos;
  double q_vel;
  double sigma_u;
  double sigma_v;
  double sigma_z;
  double p0_pos;
  double p0_vel;
  double innovation_gate;
  uint32_t history_len;
  enum EgtLatePolicy late_policy;
} EgtFilterConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *egt_version(void);

// Message for the last failed call on this thread, or null. Valid until the
// next call into the library on the same thread.
const char *egt_last_error_message(void);

struct EgtCamera egt_camera_default(void);

struct EgtFilterConfig egt_filter_config_default(void);

// Creates a bank whose clock starts at `start_stamp` seconds. A null
// `config` selects the defaults.
//
// # Safety
// `config` is null or points to a valid config; `out` is a valid pointer.
enum EgtStatus egt_filter_bank_new(const struct EgtFilterConfig *config,
                                   double start_stamp,
                                   struct EgtFilterBank **out);

// Releases a bank. Null is ignored.
//
// # Safety
// `bank` is null or was returned by [`egt_filter_bank_new`] and not yet freed.
void egt_filter_bank_free(struct EgtFilterBank *bank);

// Current filter clock in seconds, NaN for a null handle.
//
// # Safety
// `bank` is null or a live handle.
double egt_filter_bank_stamp(const struct EgtFilterBank *bank);

// Advances one tick of `dt` seconds with relative camera motion
// `C_prev → C_now` given as `rotation` (9, row-major) and `translation` (3).
// When the bank is initialized the new estimate is written to `out_points`
// (21, may be null); otherwise `NotInitialized` is returned after the clock
// has advanced.
//
// # Safety
// Pointers reference arrays of the stated lengths; `bank` is a live handle.
enum EgtStatus egt_filter_bank_step(struct EgtFilterBank *bank,
                                    double dt,
                                    const double *rotation,
                                    const double *translation,
                                    double *out_points);

// Applies a sigma-point measurement taken at `stamp`, replaying when it is
// late. `out_replayed` (may be null) receives the number of replayed ticks.
//
// # Safety
// `points` holds 21 doubles; `camera` is valid; `bank` is a live handle.
enum EgtStatus egt_filter_bank_ingest(struct EgtFilterBank *bank,
                                      const double *points,
                                      double stamp,
                                      const struct EgtCamera *camera,
                                      uint32_t *out_replayed);

// Writes the current estimate (21 doubles).
//
// # Safety
// `out_points` holds 21 doubles; `bank` is a live handle.
enum EgtStatus egt_filter_bank_estimate(const struct EgtFilterBank *bank, double *out_points);

// Sigma points of `count` points (3 doubles each) with uniform weights, or
// with `weights` when it is non-null.
//
// # Safety
// `points` holds `3 * count` doubles, `weights` null or `count` doubles,
// `out_points` 21 doubles.
enum EgtStatus egt_sigma_points(const double *points,
                                const double *weights,
                                size_t count,
                                double alpha,
                                double *out_points);

// Full perception step on a camera-frame surface cloud with unit normals:
// visibility culling, solid-angle weighting, PCA and sigma extraction.
// Returns `Empty` when nothing is visible.
//
// # Safety
// `points` and `normals` hold `3 * count` doubles, `camera` is valid,
// `out_points` holds 21 doubles.
enum EgtStatus egt_sigma_points_from_cloud(const double *points,
                                           const double *normals,
                                           size_t count,
                                           const struct EgtCamera *camera,
                                           double alpha,
                                           double *out_points);

// Curriculum sampling probability at success rate `rho` under the default
// schedule.
//
// # Safety
// `out` is a valid pointer.
enum EgtStatus egt_asc_probability(double rho, enum EgtInitType init_type, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EGOTRACK_H */
