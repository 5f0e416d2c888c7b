/* C interface to the sidco gradient sparsification library. */

#ifndef SIDCO_H
#define SIDCO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible function in this interface.
 */
typedef enum SidcoStatus {
  /**
   * Success.
   */
  SIDCO_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  SIDCO_STATUS_NULL_ARGUMENT = 1,
  /**
   * An argument failed validation (unknown compressor name, ratio out
   * of range, buffer too small, non-finite input, ...).
   */
  SIDCO_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The input was numerically degenerate (all-zero gradient, fit with
   * too few usable elements, ...).
   */
  SIDCO_STATUS_DEGENERATE_INPUT = 3,
  /**
   * Internal failure; inspect `sidco_last_error_message`.
   */
  SIDCO_STATUS_INTERNAL = 4,
} SidcoStatus;

/**
 * Opaque compressor handle. Stateful: multi-stage estimators adapt their
 * stage count across successive `sidco_compress` calls, exactly like the
 * Rust API.
 */
typedef struct SidcoCompressor SidcoCompressor;

/**
 * Opaque result of one compression call.
 */
typedef struct SidcoResult SidcoResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a compressor.
 *
 * `name` is one of: "none", "topk", "randk", "quantile", "dgc",
 * "gaussian", "sidco-e", "sidco-gp", "sidco-p". `delta` is the target
 * compression ratio k/d in (0, 1]. `seed` feeds the randomized
 * compressors; call i uses stream seed + i, so repeated runs with one
 * seed are reproducible.
 *
 * On success writes an owned handle to `*out`; release it with
 * `sidco_compressor_free`.
 *
 * # Safety
 *
 * `name` must point to a NUL-terminated string and `out` must be valid
 * for writing one pointer.
 */
enum SidcoStatus sidco_compressor_new(const char *name,
                                      double delta,
                                      uint64_t seed,
                                      struct SidcoCompressor **out);

/**
 * Releases a compressor handle. Null is a no-op.
 *
 * # Safety
 *
 * `compressor` must be null or a handle from `sidco_compressor_new`
 * that has not already been freed.
 */
void sidco_compressor_free(struct SidcoCompressor *compressor);

/**
 * Compresses a dense gradient of `dim` f64 values.
 *
 * On success writes an owned result handle to `*out`; release it with
 * `sidco_result_free`.
 *
 * # Safety
 *
 * `compressor` must be a live handle, `gradient` must point to `dim`
 * readable f64 values, and `out` must be valid for writing one pointer.
 */
enum SidcoStatus sidco_compress(struct SidcoCompressor *compressor,
                                const double *gradient,
                                size_t dim,
                                struct SidcoResult **out);

/**
 * Current stage count of a multi-stage estimator, or 0 for single-shot
 * compressors. Null returns 0.
 *
 * # Safety
 *
 * `compressor` must be null or a live handle.
 */
uint32_t sidco_compressor_stages(const struct SidcoCompressor *compressor);

/**
 * Releases a result handle. Null is a no-op.
 *
 * # Safety
 *
 * `result` must be null or a handle from `sidco_compress` that has not
 * already been freed.
 */
void sidco_result_free(struct SidcoResult *result);

/**
 * Number of selected elements. Null returns 0.
 *
 * # Safety
 *
 * `result` must be null or a live handle.
 */
size_t sidco_result_nnz(const struct SidcoResult *result);

/**
 * Dimension of the compressed gradient. Null returns 0.
 *
 * # Safety
 *
 * `result` must be null or a live handle.
 */
size_t sidco_result_dim(const struct SidcoResult *result);

/**
 * Requested selection count (`ceil(delta * dim)` for ratio-driven
 * compressors). Null returns 0.
 *
 * # Safety
 *
 * `result` must be null or a live handle.
 */
size_t sidco_result_k_target(const struct SidcoResult *result);

/**
 * Magnitude threshold that produced the selection. Null returns NaN.
 *
 * # Safety
 *
 * `result` must be null or a live handle.
 */
double sidco_result_threshold(const struct SidcoResult *result);

/**
 * Wall time of the compression call, in nanoseconds. Null returns 0.
 *
 * # Safety
 *
 * `result` must be null or a live handle.
 */
uint64_t sidco_result_elapsed_ns(const struct SidcoResult *result);

/**
 * Copies the selection into caller-owned arrays of at least
 * `sidco_result_nnz` entries each. `indices` receives the element
 * positions in ascending order; `values` the corresponding gradient
 * values. Either output may be null to skip it.
 *
 * # Safety
 *
 * `result` must be a live handle; `indices` and `values`, when
 * non-null, must each be valid for writing `capacity` entries.
 */
enum SidcoStatus sidco_result_copy(const struct SidcoResult *result,
                                   uint64_t *indices,
                                   double *values,
                                   size_t capacity);

/**
 * Static description of a status code.
 */
const char *sidco_status_message(enum SidcoStatus status);

/**
 * Detail message for the most recent failure on this thread. The pointer
 * is valid until the next failing call on the same thread.
 */
const char *sidco_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sidco_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIDCO_H */
