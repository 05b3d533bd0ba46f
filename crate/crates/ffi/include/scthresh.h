#ifndef SCTHRESH_H
#define SCTHRESH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ScthreshBoundary {
  SCTHRESH_BOUNDARY_ANCHORED = 0,
  SCTHRESH_BOUNDARY_CIRCULAR = 1,
} ScthreshBoundary;

typedef enum ScthreshMethod {
  SCTHRESH_METHOD_MIN_RATIO = 0,
  SCTHRESH_METHOD_DE = 1,
  SCTHRESH_METHOD_POTENTIAL = 2,
  SCTHRESH_METHOD_STATIONARY_SCAN = 3,
} ScthreshMethod;

/**
 * Status codes returned by every fallible function.
 */
typedef enum ScthreshStatus {
  SCTHRESH_STATUS_OK = 0,
  SCTHRESH_STATUS_NULL_POINTER = 1,
  SCTHRESH_STATUS_INVALID_STRING = 2,
  SCTHRESH_STATUS_CONFIG = 3,
  SCTHRESH_STATUS_NUMERIC = 4,
  SCTHRESH_STATUS_BUFFER_TOO_SMALL = 5,
  SCTHRESH_STATUS_PANIC = 6,
} ScthreshStatus;

typedef enum ScthreshVariant {
  SCTHRESH_VARIANT_INSIDE_AVERAGE = 0,
  SCTHRESH_VARIANT_OUTSIDE_AVERAGE = 1,
} ScthreshVariant;

/**
 * Opaque model handle.
 */
typedef struct ScthreshModel ScthreshModel;

/**
 * Threshold estimate. `witness` is NaN when the method has no scalar
 * witness.
 */
typedef struct ScthreshThreshold {
  double value;
  double lo;
  double hi;
  double witness;
  size_t evaluations;
} ScthreshThreshold;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *scthresh_version(void);

/**
 * Copies the last error message of the calling thread into `buf`
 * (NUL-terminated, truncated to `len`). Returns the full message length
 * without the NUL, or 0 if there is no message.
 *
 * # Safety
 *
 * `buf` must be null or point to `len` writable bytes.
 */
size_t scthresh_last_error(char *buf, size_t len);

/**
 * Creates a model from a spec string and stores the handle in `out`.
 *
 * # Safety
 *
 * `spec` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum ScthreshStatus scthresh_model_new(const char *spec, struct ScthreshModel **out);

/**
 * Releases a model handle. Null is ignored.
 *
 * # Safety
 *
 * `model` must be null or a handle from [`scthresh_model_new`] that has not
 * been freed.
 */
void scthresh_model_free(struct ScthreshModel *model);

/**
 * `f(g(x); ε)` with the result clamped to the model's domain.
 *
 * # Safety
 *
 * `model` must be a live handle and `out` a valid pointer.
 */
enum ScthreshStatus scthresh_model_evaluate(const struct ScthreshModel *model,
                                            double x,
                                            double epsilon,
                                            double *out);

/**
 * Single-system threshold by `method`. `tol` is the bracket width for the
 * bisection methods and is ignored by the others.
 *
 * # Safety
 *
 * `model` must be a live handle and `out` a valid pointer.
 */
enum ScthreshStatus scthresh_threshold(const struct ScthreshModel *model,
                                       enum ScthreshMethod method,
                                       double tol,
                                       struct ScthreshThreshold *out);

/**
 * Coupled-chain threshold by bisection on convergence from all-ones.
 *
 * # Safety
 *
 * `model` must be a live handle and `out` a valid pointer.
 */
enum ScthreshStatus scthresh_coupled_threshold(const struct ScthreshModel *model,
                                               size_t length,
                                               size_t width,
                                               enum ScthreshVariant variant_,
                                               enum ScthreshBoundary boundary_,
                                               double tol,
                                               struct ScthreshThreshold *out);

/**
 * Iterates the coupled chain from the uniform state `start` and writes the
 * final state into `state` (`length` entries).
 *
 * # Safety
 *
 * `model` must be a live handle, `state` must point to `state_len`
 * writable doubles and the remaining out-pointers must be valid or null.
 */
enum ScthreshStatus scthresh_evolve(const struct ScthreshModel *model,
                                    size_t length,
                                    size_t width,
                                    enum ScthreshVariant variant_,
                                    enum ScthreshBoundary boundary_,
                                    double epsilon,
                                    double start,
                                    size_t max_iter,
                                    double tol,
                                    double *state,
                                    size_t state_len,
                                    size_t *iterations,
                                    bool *converged_to_zero);

/**
 * Scalar potential `U(x; ε)`; `quad_points` applies when the model has no
 * closed form.
 *
 * # Safety
 *
 * `model` must be a live handle and `out` a valid pointer.
 */
enum ScthreshStatus scthresh_potential(const struct ScthreshModel *model,
                                       double x,
                                       double epsilon,
                                       size_t quad_points,
                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCTHRESH_H */
