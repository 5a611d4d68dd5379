#ifndef SLB_H
#define SLB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SlbStatus {
  SLB_STATUS_OK = 0,
  SLB_STATUS_NULL_POINTER = 1,
  SLB_STATUS_INVALID_ARGUMENT = 2,
  SLB_STATUS_DATA_ERROR = 3,
  SLB_STATUS_FIT_ERROR = 4,
  SLB_STATUS_PANIC = 5,
} SlbStatus;

// Opaque fitted model.
typedef struct SlbModel SlbModel;

// Confusion counts and rates from [`slb_score`].
typedef struct SlbScore {
  size_t tp;
  size_t fp;
  size_t tn;
  size_t fn_;
  double error;
  double sensitivity;
  double specificity;
  double ber;
} SlbScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the
// next call into the library on the same thread.
const char *slb_last_error(void);

// Library version as a static NUL-terminated string.
const char *slb_version(void);

// Fit `method` ("slb", "slb-minus", "lu", "nb", "tan", "knn") with default
// settings on the row-major `n × d` matrix `x` and labels in {-1, +1}.
//
// # Safety
// `x` must point to `n * d` doubles, `labels` to `n` ints, `method` to a
// NUL-terminated string and `out` to writable storage for one pointer.
enum SlbStatus slb_model_fit(const double *x,
                             size_t n,
                             size_t d,
                             const int32_t *labels,
                             const char *method,
                             uint64_t seed,
                             struct SlbModel **out);

// Decision values and labels for `n` rows. Either output may be NULL.
//
// # Safety
// `model` must be a live handle, `x` must point to `n * d` doubles and each
// non-null output to `n` writable elements.
enum SlbStatus slb_model_predict(const struct SlbModel *model,
                                 const double *x,
                                 size_t n,
                                 size_t d,
                                 int32_t *out_labels,
                                 double *out_scores);

// Number of input features, or 0 for a NULL handle.
//
// # Safety
// `model` must be NULL or a live handle.
size_t slb_model_dim(const struct SlbModel *model);

// Number of bivariate pairs in the model's feature map (0 for knn).
//
// # Safety
// `model` must be NULL or a live handle.
size_t slb_model_num_pairs(const struct SlbModel *model);

// Serialize to a newly allocated JSON string; free it with [`slb_string_free`].
//
// # Safety
// `model` must be a live handle and `out` writable storage for one pointer.
enum SlbStatus slb_model_to_json(const struct SlbModel *model, char **out);

// Parse a model from JSON text.
//
// # Safety
// `json` must be a NUL-terminated string and `out` writable storage for one pointer.
enum SlbStatus slb_model_from_json(const char *json, struct SlbModel **out);

// Write the model file to `path`.
//
// # Safety
// `model` must be a live handle and `path` a NUL-terminated string.
enum SlbStatus slb_model_save(const struct SlbModel *model, const char *path);

// Read a model file from `path`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable storage for one pointer.
enum SlbStatus slb_model_load(const char *path, struct SlbModel **out);

// Release a model handle. NULL is ignored.
//
// # Safety
// `model` must be NULL or a handle not yet freed.
void slb_model_free(struct SlbModel *model);

// Release a string returned by the library. NULL is ignored.
//
// # Safety
// `s` must be NULL or a string from this library not yet freed.
void slb_string_free(char *s);

// Biased HSIC statistic of two samples with median-heuristic Gaussian kernels.
//
// # Safety
// `z` and `w` must point to `n` doubles and `out` to one writable double.
enum SlbStatus slb_hsic_statistic(const double *z, const double *w, size_t n, double *out);

// Confusion counts, error rate, sensitivity, specificity and BER of `n`
// predictions against labels, both in {-1, +1}.
//
// # Safety
// `pred` and `labels` must point to `n` ints and `out` to one writable [`SlbScore`].
enum SlbStatus slb_score(const int32_t *pred,
                         const int32_t *labels,
                         size_t n,
                         struct SlbScore *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLB_H */
