#ifndef ATTENTAB_H
#define ATTENTAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AttentabF1Average {
  ATTENTAB_F1_AVERAGE_MACRO = 0,
  ATTENTAB_F1_AVERAGE_WEIGHTED = 1,
} AttentabF1Average;

// Result of every fallible call.
typedef enum AttentabStatus {
  ATTENTAB_STATUS_OK = 0,
  ATTENTAB_STATUS_NULL_ARGUMENT = 1,
  ATTENTAB_STATUS_INVALID_ARGUMENT = 2,
  ATTENTAB_STATUS_IO = 3,
  ATTENTAB_STATUS_FORMAT = 4,
  ATTENTAB_STATUS_SCHEMA_MISMATCH = 5,
  ATTENTAB_STATUS_NUMERIC = 6,
  ATTENTAB_STATUS_STATE = 7,
  ATTENTAB_STATUS_INTERNAL = 8,
} AttentabStatus;

// Opaque encoded dataset.
typedef struct AttentabDataset AttentabDataset;

// Opaque trained model.
typedef struct AttentabModel AttentabModel;

// Metrics over every row of a dataset. `loss` is unweighted cross-entropy.
typedef struct AttentabMetrics {
  double loss;
  double accuracy;
  double f1;
} AttentabMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, empty after a
// success. Valid until the next call on the same thread.
const char *attentab_last_error(void);

// Library version as a static NUL-terminated string.
const char *attentab_version(void);

// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum AttentabStatus attentab_model_load(const char *path, struct AttentabModel **out);

// # Safety
// `model` must come from [`attentab_model_load`] and not be freed twice.
void attentab_model_free(struct AttentabModel *model);

// Number of raw feature columns expected per row and number of classes.
//
// # Safety
// `model` must be a live handle; the out pointers may be null.
enum AttentabStatus attentab_model_dims(const struct AttentabModel *model,
                                        size_t *n_features,
                                        size_t *n_classes);

// Writes `rows × n_classes` probabilities into `out`.
//
// # Safety
// `features` must hold `rows × n_features` doubles and `out` `out_len`.
enum AttentabStatus attentab_model_predict_proba(const struct AttentabModel *model,
                                                 const double *features,
                                                 size_t rows,
                                                 double *out,
                                                 size_t out_len);

// Writes one predicted class index per row into `out`.
//
// # Safety
// `features` must hold `rows × n_features` doubles and `out` `out_len`.
enum AttentabStatus attentab_model_predict(const struct AttentabModel *model,
                                           const double *features,
                                           size_t rows,
                                           size_t *out,
                                           size_t out_len);

// Mask-based importance of each raw feature over the given rows; the
// `n_features` values written to `out` sum to 1.
//
// # Safety
// `features` must hold `rows × n_features` doubles and `out` `out_len`.
enum AttentabStatus attentab_model_global_importance(const struct AttentabModel *model,
                                                     const double *features,
                                                     size_t rows,
                                                     double *out,
                                                     size_t out_len);

// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum AttentabStatus attentab_dataset_load(const char *path, struct AttentabDataset **out);

// # Safety
// `dataset` must come from [`attentab_dataset_load`] and not be freed twice.
void attentab_dataset_free(struct AttentabDataset *dataset);

// # Safety
// `dataset` must be a live handle; the out pointers may be null.
enum AttentabStatus attentab_dataset_dims(const struct AttentabDataset *dataset,
                                          size_t *n_rows,
                                          size_t *n_features);

// Scores the model on every row of `dataset`. Fails with
// `SchemaMismatch` if the dataset was encoded with a different schema.
//
// # Safety
// Both handles must be live and `out` writable.
enum AttentabStatus attentab_model_evaluate(const struct AttentabModel *model,
                                            const struct AttentabDataset *dataset,
                                            enum AttentabF1Average average,
                                            struct AttentabMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ATTENTAB_H */
