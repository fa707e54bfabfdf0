#ifndef DTLIDS_H
#define DTLIDS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum DtlStatus {
  DTL_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  DTL_STATUS_NULL_POINTER = 1,
  /**
   * Bad argument value: unknown model kind, invalid UTF-8, zero sizes.
   */
  DTL_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Buffer length or tensor geometry mismatch.
   */
  DTL_STATUS_SHAPE = 3,
  /**
   * File could not be read or written.
   */
  DTL_STATUS_IO = 4,
  /**
   * Malformed checkpoint.
   */
  DTL_STATUS_FORMAT = 5,
  /**
   * A metric is undefined for the input (e.g. a single-class AUC).
   */
  DTL_STATUS_UNDEFINED = 6,
  /**
   * Any other library error.
   */
  DTL_STATUS_FAILED = 7,
  /**
   * The library panicked; the handle involved should be freed.
   */
  DTL_STATUS_PANIC = 8,
} DtlStatus;

/**
 * Opaque network handle.
 */
typedef struct DtlNetwork DtlNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a freshly initialised network.
 *
 * `kind` is one of `presnet`, `single` (single-channel DNN; `channels` must
 * be 1), `multi` (multi-channel DNN, one branch per channel), `mlp` or `fcn`.
 *
 * # Safety
 * `kind` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DtlStatus dtl_network_build(const char *kind,
                                 size_t channels,
                                 size_t window,
                                 size_t classes,
                                 uint64_t seed,
                                 struct DtlNetwork **out);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DtlStatus dtl_network_load(const char *path, struct DtlNetwork **out);

/**
 * Writes a checkpoint file.
 *
 * # Safety
 * `net` must be a live handle and `path` a NUL-terminated string.
 */
enum DtlStatus dtl_network_save(const struct DtlNetwork *net, const char *path);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `net` must be null or a handle not yet freed.
 */
void dtl_network_free(struct DtlNetwork *net);

/**
 * Input geometry and class count.
 *
 * # Safety
 * `net` must be a live handle; the out pointers must be valid.
 */
enum DtlStatus dtl_network_geometry(const struct DtlNetwork *net,
                                    size_t *channels,
                                    size_t *window,
                                    size_t *classes);

/**
 * Number of stored values, batch-norm running statistics included.
 *
 * # Safety
 * `net` must be a live handle and `out` a valid pointer.
 */
enum DtlStatus dtl_network_param_count(const struct DtlNetwork *net, size_t *out);

/**
 * Class probabilities in inference mode.
 *
 * `x` holds `n * channels * window` values, row-major `[n, channels,
 * window]`; `probs` receives `n * classes` values and `probs_len` must be
 * exactly that.
 *
 * # Safety
 * `net` must be a live handle and the buffers valid for the given lengths.
 */
enum DtlStatus dtl_network_predict(const struct DtlNetwork *net,
                                   const double *x,
                                   size_t n,
                                   double *probs,
                                   size_t probs_len);

/**
 * Squared distance between the mean rows of `a` (`[n, features]`) and `b`
 * (`[m, features]`), both row-major.
 *
 * # Safety
 * The buffers must be valid for the given lengths and `out` a valid pointer.
 */
enum DtlStatus dtl_mmd(const double *a,
                       size_t n,
                       const double *b,
                       size_t m,
                       size_t features,
                       double *out);

/**
 * Area under the ROC curve; `positive[i]` is non-zero for positives.
 * Returns `DTL_STATUS_UNDEFINED` unless both classes occur.
 *
 * # Safety
 * `scores` and `positive` must hold `n` values and `out` be a valid pointer.
 */
enum DtlStatus dtl_roc_auc(const double *scores, const uint8_t *positive, size_t n, double *out);

/**
 * Message of the last failed call on this thread (empty if none). The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *dtl_last_error_message(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *dtl_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DTLIDS_H */
