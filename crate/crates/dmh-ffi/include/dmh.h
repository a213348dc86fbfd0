#ifndef DMH_H
#define DMH_H

/* Generated by cbindgen from dmh-ffi/src/lib.rs; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible function of this library.
 */
enum DmhStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  /**
   * The call succeeded.
   */
  DMH_STATUS_OK = 0,
  /**
   * An unclassified failure; see `dmh_last_error_message`.
   */
  DMH_STATUS_ERROR = 1,
  /**
   * A contract violation: bad shapes, indices, or configuration.
   */
  DMH_STATUS_CONTRACT = 2,
  /**
   * The training objective became non-finite.
   */
  DMH_STATUS_DIVERGED = 3,
  /**
   * An I/O failure or a malformed file.
   */
  DMH_STATUS_IO = 4,
  /**
   * A required pointer argument was null.
   */
  DMH_STATUS_NULL_ARGUMENT = 5,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum DmhStatus DmhStatus;
#else
typedef int32_t DmhStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * A set of fixed-length binary codes, bit-packed.
 */
typedef struct DmhCodes DmhCodes;

/**
 * A trained model: per-view projections plus the training configuration.
 */
typedef struct DmhModel DmhModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the explanation of the most recent failure on this thread, or
 * an empty string if nothing failed yet. The pointer stays valid until
 * the next failing call on the same thread.
 */
const char *dmh_last_error_message(void);

/**
 * Returns the library version as a static NUL-terminated string.
 */
const char *dmh_version(void);

/**
 * Trains a model on `n_views` feature views of `n` samples each.
 *
 * `views[v]` points at a row-major `n x dims[v]` matrix. `is_label_view`,
 * `alphas`, `betas` and `gammas` each hold one entry per view. Pass
 * `step_start`/`step_end`/`max_iterations`/`convergence_rtol` as the
 * training schedule (`convergence_rtol = 0` disables early stopping).
 * On success `*out_model` receives a handle owned by the caller.
 *
 * # Safety
 * All pointers must be valid for the lengths implied above.
 */
DmhStatus dmh_train(size_t n,
                    size_t n_views,
                    const size_t *dims,
                    const double *const *views,
                    const uint8_t *is_label_view,
                    const double *alphas,
                    const double *betas,
                    const double *gammas,
                    size_t code_length,
                    double step_start,
                    double step_end,
                    size_t max_iterations,
                    double convergence_rtol,
                    uint64_t seed,
                    struct DmhModel **out_model);

/**
 * Writes a model to `path` in the documented binary format.
 *
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
DmhStatus dmh_model_save(const struct DmhModel *model, const char *path);

/**
 * Reads a model previously written by `dmh_model_save` (or the CLI).
 * On success `*out_model` receives a handle owned by the caller.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_model` must be writable.
 */
DmhStatus dmh_model_load(const char *path, struct DmhModel **out_model);

/**
 * Number of views the model was trained on (label view included).
 *
 * # Safety
 * `model` must be a live handle.
 */
size_t dmh_model_view_count(const struct DmhModel *model);

/**
 * Code length in bits produced by the model.
 *
 * # Safety
 * `model` must be a live handle.
 */
size_t dmh_model_code_length(const struct DmhModel *model);

/**
 * Releases a model handle. Passing null is a no-op.
 *
 * # Safety
 * `model` must be a handle from this library, released at most once.
 */
void dmh_model_free(struct DmhModel *model);

/**
 * Encodes a row-major `n x d` matrix with the model's view
 * `view_index`. On success `*out_codes` receives a handle owned by the
 * caller.
 *
 * # Safety
 * All pointers must be valid; `data` must hold `n * d` doubles.
 */
DmhStatus dmh_encode(const struct DmhModel *model,
                     size_t view_index,
                     const double *data,
                     size_t n,
                     size_t d,
                     struct DmhCodes **out_codes);

/**
 * Writes codes to `path` in the documented packed format.
 *
 * # Safety
 * `codes` must be a live handle and `path` a NUL-terminated string.
 */
DmhStatus dmh_codes_save(const struct DmhCodes *codes, const char *path);

/**
 * Reads codes previously written by `dmh_codes_save` (or the CLI).
 * On success `*out_codes` receives a handle owned by the caller.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_codes` must be writable.
 */
DmhStatus dmh_codes_load(const char *path, struct DmhCodes **out_codes);

/**
 * Number of codes in the set.
 *
 * # Safety
 * `codes` must be a live handle.
 */
size_t dmh_codes_count(const struct DmhCodes *codes);

/**
 * Code length in bits.
 *
 * # Safety
 * `codes` must be a live handle.
 */
size_t dmh_codes_code_length(const struct DmhCodes *codes);

/**
 * Releases a codes handle. Passing null is a no-op.
 *
 * # Safety
 * `codes` must be a handle from this library, released at most once.
 */
void dmh_codes_free(struct DmhCodes *codes);

/**
 * Hamming distance between code `i` of `a` and code `j` of `b`.
 *
 * # Safety
 * `a`, `b` and `out_distance` must be valid.
 */
DmhStatus dmh_hamming_distance(const struct DmhCodes *a,
                               size_t i,
                               const struct DmhCodes *b,
                               size_t j,
                               uint32_t *out_distance);

/**
 * Mean average precision of `queries` against `database` under Hamming
 * ranking. The relevant database indices of query `q` are
 * `relevant_indices[relevant_offsets[q] .. relevant_offsets[q + 1]]`;
 * `relevant_offsets` holds `count(queries) + 1` entries. Queries with an
 * empty relevant set are excluded from the mean. `r_cutoff = 0` ranks
 * the whole database.
 *
 * # Safety
 * All pointers must be valid for the lengths implied above.
 */
DmhStatus dmh_mean_average_precision(const struct DmhCodes *queries,
                                     const struct DmhCodes *database,
                                     const size_t *relevant_offsets,
                                     const size_t *relevant_indices,
                                     size_t r_cutoff,
                                     double *out_map);

/**
 * Hash-lookup precision/recall/F1 of `queries` against `database` at
 * the given Hamming `radius`, with ground truth in the same CSR layout
 * as `dmh_mean_average_precision`. Queries with an empty relevant set
 * are excluded from the averages.
 *
 * # Safety
 * All pointers must be valid for the lengths implied above.
 */
DmhStatus dmh_lookup_f1(const struct DmhCodes *queries,
                        const struct DmhCodes *database,
                        const size_t *relevant_offsets,
                        const size_t *relevant_indices,
                        size_t radius,
                        double *out_precision,
                        double *out_recall,
                        double *out_f1);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DMH_H */
