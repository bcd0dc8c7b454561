#ifndef QUERYPULSE_H
#define QUERYPULSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by every function.
typedef enum QpStatus {
  QP_STATUS_OK = 0,
  QP_STATUS_NULL_POINTER = 1,
  QP_STATUS_INVALID_UTF8 = 2,
  QP_STATUS_IO = 3,
  QP_STATUS_INVALID_ARGUMENT = 4,
  QP_STATUS_INVALID_ARTIFACT = 5,
  QP_STATUS_SHAPE_MISMATCH = 6,
  QP_STATUS_UNDEFINED_AUC = 7,
  QP_STATUS_BUFFER_TOO_SMALL = 8,
  QP_STATUS_PANIC = 9,
} QpStatus;

// Opaque handle to a loaded model.
typedef struct QpModel QpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Loads a model artifact (`model.json`) from `path`. On success `*out`
// receives a handle that must be released with [`qp_model_free`].
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum QpStatus qp_model_load(const char *path, struct QpModel **out);

// Loads a model artifact from a JSON string.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum QpStatus qp_model_load_json(const char *json, struct QpModel **out);

// Releases a model handle. Null is ignored.
//
// # Safety
// `model` must be null or a handle from a load function not yet freed.
void qp_model_free(struct QpModel *model);

// Width of the full indicator row the model expects.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum QpStatus qp_model_num_indicators(const struct QpModel *model, size_t *out);

// DSAT probability for one full indicator row of `len` bytes (each 0 or 1).
//
// # Safety
// `model` must be a live handle, `row` must point to `len` readable bytes
// and `out` must be a valid pointer.
enum QpStatus qp_model_predict(const struct QpModel *model,
                               const uint8_t *row,
                               size_t len,
                               double *out);

// Rank AUC of `n` scores against labels (non-zero means positive).
//
// # Safety
// `scores` and `labels` must point to `n` readable elements and `out` must
// be a valid pointer.
enum QpStatus qp_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

// Normalizes a raw query into `buf` (capacity `cap` bytes, NUL included).
// `*needed` always receives the required capacity; when it exceeds `cap`
// the call returns `QP_STATUS_BUFFER_TOO_SMALL` and leaves `buf` untouched.
//
// # Safety
// `raw` must be a NUL-terminated string, `buf` must be null or point to
// `cap` writable bytes, and `needed` must be a valid pointer.
enum QpStatus qp_normalize_query(const char *raw, char *buf, size_t cap, size_t *needed);

// Message of the last failed call on this thread, or null after a success.
// The pointer stays valid until the next querypulse call on this thread.
const char *qp_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *qp_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUERYPULSE_H */
