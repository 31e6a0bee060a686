#ifndef DEPCENS_H
#define DEPCENS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum DcStatus {
  DC_STATUS_OK = 0,
  /*
   Null pointer, bad UTF-8 or an unknown enum value.
   */
  DC_STATUS_INVALID_ARGUMENT = 1,
  DC_STATUS_DOMAIN = 2,
  DC_STATUS_SHAPE = 3,
  DC_STATUS_CONFIG = 4,
  DC_STATUS_DATA = 5,
  DC_STATUS_NUMERIC = 6,
  DC_STATUS_PERSISTENCE = 7,
  DC_STATUS_UNDEFINED_METRIC = 8,
  DC_STATUS_IO = 9,
  DC_STATUS_PANIC = 10,
} DcStatus;

/*
 Standardized error distribution of a log-time margin.
 */
typedef enum DcBaselineFamily {
  DC_BASELINE_FAMILY_EXTREME = 0,
  DC_BASELINE_FAMILY_NORMAL = 1,
  DC_BASELINE_FAMILY_LOGISTIC = 2,
} DcBaselineFamily;

/*
 Survival loss specification.
 */
typedef struct DcLoss DcLoss;

/*
 Trained tree ensemble.
 */
typedef struct DcModel DcModel;

/*
 Booster hyperparameters. Start from [`dc_train_params_default`].
 */
typedef struct DcTrainParams {
  size_t rounds;
  double learning_rate;
  size_t max_depth;
  double lambda;
  double gamma;
  double min_child_weight;
  /*
   Non-zero: start from `base_score`. Zero: start from the mean log time.
   */
  int32_t use_base_score;
  double base_score;
} DcTrainParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message describing the last failure on this thread. The pointer stays
 valid until the next failing call on the same thread. Empty if no call
 has failed.
 */
const char *dc_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *dc_version(void);

/*
 Release a string returned by this library. Null is ignored.

 # Safety
 `s` must come from this library and not have been freed already.
 */
void dc_string_free(char *s);

/*
 Default booster hyperparameters.
 */
struct DcTrainParams dc_train_params_default(void);

/*
 Clayton dependent-censoring loss. Families are `DcBaselineFamily`
 values.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum DcStatus dc_loss_clayton_new(double theta,
                                  int32_t event_family,
                                  double event_sigma,
                                  int32_t censor_family,
                                  double censor_sigma,
                                  struct DcLoss **out);

/*
 Independent-censoring AFT loss. `family` is a `DcBaselineFamily` value.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum DcStatus dc_loss_independent_new(int32_t family_code, double sigma, struct DcLoss **out);

/*
 # Safety
 `loss` must come from a `dc_loss_*_new` call and not be used afterwards.
 */
void dc_loss_free(struct DcLoss *loss);

/*
 Loss value and its first and second derivatives in `yhat` for one
 observation. Any of the out pointers may be null.

 # Safety
 `loss` must be a live handle; non-null out pointers must be writable.
 */
enum DcStatus dc_loss_evaluate(const struct DcLoss *loss,
                               double time,
                               int32_t event,
                               double yhat,
                               double *out_value,
                               double *out_grad,
                               double *out_hess);

/*
 Fit a booster on `n_rows` observations with `n_cols` features.
 `events[i]` is non-zero when row `i` is an observed event.

 # Safety
 Array pointers must reference at least the stated number of elements;
 `params` may be null for defaults; `out` must be writable.
 */
enum DcStatus dc_train(const double *time,
                       const uint8_t *events,
                       const double *x,
                       size_t n_rows,
                       size_t n_cols,
                       const struct DcLoss *loss,
                       const struct DcTrainParams *params,
                       struct DcModel **out);

/*
 Load a model from a JSON file.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum DcStatus dc_model_load(const char *path, struct DcModel **out);

/*
 Parse a model from JSON text.

 # Safety
 `json` must be a NUL-terminated string; `out` must be writable.
 */
enum DcStatus dc_model_from_json(const char *json, struct DcModel **out);

/*
 Serialize a model to JSON. Free the result with [`dc_string_free`].

 # Safety
 `model` must be a live handle; `out` must be writable.
 */
enum DcStatus dc_model_to_json(const struct DcModel *model, char **out);

/*
 Write a model to a JSON file.

 # Safety
 `model` must be a live handle; `path` a NUL-terminated string.
 */
enum DcStatus dc_model_save(const struct DcModel *model, const char *path);

/*
 # Safety
 `model` must come from this library and not be used afterwards.
 */
void dc_model_free(struct DcModel *model);

/*
 Number of features the model expects, or 0 for a null handle.

 # Safety
 `model` must be null or a live handle.
 */
size_t dc_model_n_features(const struct DcModel *model);

/*
 Number of trees, or 0 for a null handle.

 # Safety
 `model` must be null or a live handle.
 */
size_t dc_model_n_trees(const struct DcModel *model);

/*
 Predicted log times for `n_rows` rows, written to `out[0..n_rows]`.

 # Safety
 `x` must hold `n_rows * n_cols` values and `out` room for `n_rows`.
 */
enum DcStatus dc_model_predict(const struct DcModel *model,
                               const double *x,
                               size_t n_rows,
                               size_t n_cols,
                               double *out);

/*
 Predicted event times, `exp` of [`dc_model_predict`].

 # Safety
 As for [`dc_model_predict`].
 */
enum DcStatus dc_model_predict_time(const struct DcModel *model,
                                    const double *x,
                                    size_t n_rows,
                                    size_t n_cols,
                                    double *out);

/*
 Harrell's concordance index of predicted times against observed
 `(time, event)` pairs.

 # Safety
 Arrays must hold `n` elements; `out` must be writable.
 */
enum DcStatus dc_concordance(const double *time,
                             const uint8_t *events,
                             const double *predicted,
                             size_t n,
                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEPCENS_H */
