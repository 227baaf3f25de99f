#ifndef DPODYN_H
#define DPODYN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DpodynStatus {
  DPODYN_STATUS_OK = 0,
  DPODYN_STATUS_NULL_POINTER = 1,
  DPODYN_STATUS_INVALID_ARGUMENT = 2,
  DPODYN_STATUS_IO = 3,
  DPODYN_STATUS_PARSE = 4,
  DPODYN_STATUS_DOMAIN = 5,
  DPODYN_STATUS_DIVERGED = 6,
  DPODYN_STATUS_DEGENERATE = 7,
  DPODYN_STATUS_PANIC = 8,
} DpodynStatus;

/**
 * A preference dataset.
 */
typedef struct DpodynDataset DpodynDataset;

/**
 * A training run: its recorded metrics and, unless it diverged, the final `ΔW`.
 */
typedef struct DpodynTrace DpodynTrace;

/**
 * One recorded step.
 */
typedef struct DpodynRecord {
  size_t step;
  double loss;
  double norm_dw;
  double norm_matrix;
  double acc_pooled;
} DpodynRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next failing call.
 */
const char *dpodyn_last_error(void);

/**
 * Loads a `.jsonl` dataset, or a `.csv` one by extension.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DpodynStatus dpodyn_dataset_load(const char *path, struct DpodynDataset **out);

/**
 * # Safety
 * `ds` must be a live handle and `path` a NUL-terminated string.
 */
enum DpodynStatus dpodyn_dataset_save(const struct DpodynDataset *ds, const char *path);

/**
 * One behavior `b0` from `n` row-major vectors of length `d`; `labels[i]` is `+1` or `-1`.
 *
 * # Safety
 * `data` must hold `n * d` values and `labels` `n` values.
 */
enum DpodynStatus dpodyn_dataset_from_rows(size_t d,
                                           size_t n,
                                           const double *data,
                                           const int8_t *labels,
                                           struct DpodynDataset **out);

/**
 * Generates `count` behaviors `b0..`, behavior `i` with distinguishability `deltas[i]`
 * along axis `i`, isotropic variance `sigma2` and tail exponent `alpha`.
 *
 * # Safety
 * `deltas` must hold `count` values.
 */
enum DpodynStatus dpodyn_dataset_generate(size_t d,
                                          const double *deltas,
                                          size_t count,
                                          double alpha,
                                          double sigma2,
                                          size_t n_per_behavior,
                                          uint64_t seed,
                                          struct DpodynDataset **out);

/**
 * Dimension of the embeddings, 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t dpodyn_dataset_dim(const struct DpodynDataset *ds);

/**
 * Number of samples, 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t dpodyn_dataset_len(const struct DpodynDataset *ds);

/**
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t dpodyn_dataset_behavior_count(const struct DpodynDataset *ds);

/**
 * New dataset with every label swapped.
 *
 * # Safety
 * `ds` must be a live handle and `out` a valid pointer.
 */
enum DpodynStatus dpodyn_dataset_flip(const struct DpodynDataset *ds, struct DpodynDataset **out);

/**
 * New dataset with class means pushed apart by `kappa_sep` and spread scaled by `kappa_var`.
 *
 * # Safety
 * `ds` must be a live handle and `out` a valid pointer.
 */
enum DpodynStatus dpodyn_dataset_shift(const struct DpodynDataset *ds,
                                       double kappa_sep,
                                       double kappa_var,
                                       struct DpodynDataset **out);

/**
 * # Safety
 * `ds` must be null or a handle from this library, not freed before.
 */
void dpodyn_dataset_free(struct DpodynDataset *ds);

/**
 * Reduced DPO loss of the head `delta_w` (length `d`) with a zero initial boundary.
 *
 * # Safety
 * `delta_w` must hold `d` values and `out` be a valid pointer.
 */
enum DpodynStatus dpodyn_reduced_loss(const struct DpodynDataset *ds,
                                      const double *delta_w,
                                      size_t d,
                                      double beta,
                                      double *out);

/**
 * Trains from zero for `steps` steps; `batch_size` 0 means full batch.
 * On divergence the partial trace is still returned together with `DIVERGED`.
 *
 * # Safety
 * `ds` must be a live handle and `out` a valid pointer.
 */
enum DpodynStatus dpodyn_train(const struct DpodynDataset *ds,
                               double beta,
                               double eta,
                               size_t steps,
                               size_t batch_size,
                               uint64_t seed,
                               struct DpodynTrace **out);

/**
 * Number of recorded steps, 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live handle.
 */
size_t dpodyn_trace_len(const struct DpodynTrace *t);

/**
 * Step at which training diverged, 0 if it completed.
 *
 * # Safety
 * `t` must be null or a live handle.
 */
size_t dpodyn_trace_diverged_at(const struct DpodynTrace *t);

/**
 * # Safety
 * `t` must be a live handle and `out` a valid pointer.
 */
enum DpodynStatus dpodyn_trace_record(const struct DpodynTrace *t,
                                      size_t index,
                                      struct DpodynRecord *out);

/**
 * Copies the final `ΔW` into `buf`, which must hold the dataset dimension.
 *
 * # Safety
 * `buf` must hold `len` writable values.
 */
enum DpodynStatus dpodyn_trace_final_weights(const struct DpodynTrace *t, double *buf, size_t len);

/**
 * # Safety
 * `t` must be a live handle and `path` a NUL-terminated string.
 */
enum DpodynStatus dpodyn_trace_write_csv(const struct DpodynTrace *t, const char *path);

/**
 * # Safety
 * `t` must be null or a handle from this library, not freed before.
 */
void dpodyn_trace_free(struct DpodynTrace *t);

/**
 * Weight-change bound `6 β′ η t d^{Δ−1/2}`.
 */
double dpodyn_thm1_bound(double beta_prime, double eta, size_t d, double delta, size_t t);

/**
 * Writes one priority level per behavior into `levels` (capacity `cap`) and the count into `count`.
 *
 * # Safety
 * `levels` must hold `cap` writable values and `count` be a valid pointer.
 */
enum DpodynStatus dpodyn_priority_levels(const struct DpodynDataset *ds,
                                         double *levels,
                                         size_t cap,
                                         size_t *count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DPODYN_H */
