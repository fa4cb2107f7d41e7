#ifndef MOTAS_H
#define MOTAS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MotasStatus {
  MOTAS_STATUS_OK = 0,
  MOTAS_STATUS_NULL_POINTER = 1,
  MOTAS_STATUS_INVALID_ARGUMENT = 2,
  MOTAS_STATUS_IO = 3,
  MOTAS_STATUS_FORMAT = 4,
  MOTAS_STATUS_DIMENSION_MISMATCH = 5,
  MOTAS_STATUS_NOT_FOUND = 6,
  MOTAS_STATUS_BUFFER_TOO_SMALL = 7,
  MOTAS_STATUS_INTERNAL = 8,
} MotasStatus;

/**
 * A feature cache loaded into memory.
 */
typedef struct MotasCache MotasCache;

/**
 * A trained model loaded from a checkpoint.
 */
typedef struct MotasModel MotasModel;

typedef struct MotasMetrics {
  double accuracy;
  double precision_ad;
  double precision_cn;
  double recall_ad;
  double recall_cn;
  double f1_ad;
  double f1_cn;
  uint64_t tp;
  uint64_t fp;
  uint64_t tn;
  uint64_t fn_;
} MotasMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *motas_version(void);

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *motas_last_error_message(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MotasStatus motas_cache_open(const char *path, struct MotasCache **out);

/**
 * # Safety
 * `cache` must come from [`motas_cache_open`] and not be freed already.
 */
void motas_cache_free(struct MotasCache *cache);

/**
 * Row width, or 0 for a null handle.
 *
 * # Safety
 * `cache` must be null or a live handle.
 */
size_t motas_cache_dim(const struct MotasCache *cache);

/**
 * Row count, or 0 for a null handle.
 *
 * # Safety
 * `cache` must be null or a live handle.
 */
size_t motas_cache_rows(const struct MotasCache *cache);

/**
 * Copy the row for `id` into `out`, which must hold at least `dim` floats.
 *
 * # Safety
 * `cache` must be a live handle, `id` NUL-terminated, and `out` valid for
 * `out_len` writes.
 */
enum MotasStatus motas_cache_get(const struct MotasCache *cache,
                                 const char *id,
                                 float *out,
                                 size_t out_len);

/**
 * MFCCs of a mono clip with the default 25 ms / 10 ms framing, written
 * frame-major (`frames × 13`). `out_frames` always receives the frame count;
 * with a null or short `out` the call returns `BufferTooSmall`, so callers
 * can size the buffer first.
 *
 * # Safety
 * `samples` must be valid for `n` reads, `out` for `out_len` writes, and
 * `out_frames` writable.
 */
enum MotasStatus motas_compute_mfcc(const double *samples,
                                    size_t n,
                                    uint32_t sample_rate,
                                    double *out,
                                    size_t out_len,
                                    size_t *out_frames);

/**
 * Scores with AD (1) as the positive class. Entries must be 0 or 1.
 *
 * # Safety
 * `preds` and `labels` must be valid for `n` reads; `out` writable.
 */
enum MotasStatus motas_metrics(const uint8_t *preds,
                               const uint8_t *labels,
                               size_t n,
                               struct MotasMetrics *out);

/**
 * Load a checkpoint written by `motas train` (its `.json` sidecar must sit
 * next to it).
 *
 * # Safety
 * `path` must be NUL-terminated; `out` writable.
 */
enum MotasStatus motas_model_load(const char *path, struct MotasModel **out);

/**
 * # Safety
 * `model` must come from [`motas_model_load`] and not be freed already.
 */
void motas_model_free(struct MotasModel *model);

/**
 * AD probability for one segment. The MFCC input is an embedding or a
 * flattened `frames × n_mfcc` sequence and the spectrogram input an
 * embedding or a 224×224 image, matching the model's configuration.
 *
 * # Safety
 * Each pointer must be valid for its length in reads; `out_prob` writable.
 */
enum MotasStatus motas_model_predict(const struct MotasModel *model,
                                     const double *w2v,
                                     size_t w2v_len,
                                     const double *mfcc,
                                     size_t mfcc_len,
                                     const double *spec,
                                     size_t spec_len,
                                     const double *text,
                                     size_t text_len,
                                     double *out_prob);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOTAS_H */
