#ifndef ONCOPIPE_H
#define ONCOPIPE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OncoStatus {
  ONCO_STATUS_OK = 0,
  ONCO_STATUS_NULL_POINTER = 1,
  ONCO_STATUS_INVALID_ARGUMENT = 2,
  ONCO_STATUS_SHAPE_MISMATCH = 3,
  ONCO_STATUS_EMPTY_MASK = 4,
  ONCO_STATUS_IO = 5,
  ONCO_STATUS_FORMAT = 6,
  ONCO_STATUS_NON_CONVERGENCE = 7,
  ONCO_STATUS_DEGENERATE = 8,
  ONCO_STATUS_PANIC = 9,
} OncoStatus;

typedef enum OncoLossKind {
  ONCO_LOSS_KIND_DICE = 0,
  ONCO_LOSS_KIND_FOCAL = 1,
  ONCO_LOSS_KIND_LOG_COSH_DICE_FOCAL = 2,
} OncoLossKind;

// Opaque binary mask.
typedef struct OncoMask OncoMask;

// Opaque fitted survival model.
typedef struct OncoModel OncoModel;

typedef struct OncoSegScore {
  double dsc;
  double avg_hd;
  double hd95;
} OncoSegScore;

typedef struct OncoTTest {
  double t;
  double p;
  size_t df;
} OncoTTest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. Valid until the
// next failing call on the same thread.
const char *onco_last_error(void);

// Library version as a static NUL-terminated string.
const char *onco_version(void);

// Builds a mask from `nx*ny*nz` bytes (nonzero = foreground).
//
// # Safety
// `dims` and `spacing` point to 3 values, `data` to `dims[0]*dims[1]*dims[2]` bytes.
enum OncoStatus onco_mask_new(const size_t *dims,
                              const double *spacing,
                              const uint8_t *data,
                              struct OncoMask **out_mask);

// # Safety
// `mask` is NULL or came from `onco_mask_new` and is not used afterwards.
void onco_mask_free(struct OncoMask *mask);

// Foreground voxel count, or 0 for NULL.
//
// # Safety
// `mask` is NULL or a live handle.
size_t onco_mask_count(const struct OncoMask *mask);

// # Safety
// Handles are live; `out_dsc` is writable.
enum OncoStatus onco_dice(const struct OncoMask *pred,
                          const struct OncoMask *truth,
                          double *out_dsc);

// DSC, average HD and HD95 in millimetres.
//
// # Safety
// Handles are live; `out_score` is writable.
enum OncoStatus onco_score_pair(const struct OncoMask *pred,
                                const struct OncoMask *truth,
                                struct OncoSegScore *out_score);

// Loss of `n` binary labels `y` against probabilities `p`.
//
// # Safety
// `y` and `p` point to `n` values; `out_loss` is writable.
enum OncoStatus onco_loss(enum OncoLossKind loss,
                          const double *y,
                          const double *p,
                          size_t n,
                          double gamma,
                          double smooth,
                          double *out_loss);

// Gradient with respect to `p`, written to `out_grad[0..n]`.
//
// # Safety
// `y`, `p` and `out_grad` point to `n` values.
enum OncoStatus onco_loss_gradient(enum OncoLossKind loss,
                                   const double *y,
                                   const double *p,
                                   size_t n,
                                   double gamma,
                                   double smooth,
                                   double *out_grad);

// Harrell's C-index; `event` bytes are nonzero for an observed event.
//
// # Safety
// Arrays hold `n` values; `out_c` is writable.
enum OncoStatus onco_concordance_index(const double *risk,
                                       const double *time,
                                       const uint8_t *event,
                                       size_t n,
                                       double *out_c);

// Corrected paired t-test over `k` fold scores.
//
// # Safety
// `a` and `b` hold `k` values; `out_test` is writable.
enum OncoStatus onco_corrected_ttest(const double *a,
                                     const double *b,
                                     size_t k,
                                     size_t n_train,
                                     size_t n_test,
                                     struct OncoTTest *out_test);

// Loads a model JSON written by the library or CLI.
//
// # Safety
// `path` is a NUL-terminated UTF-8 string; `out_model` is writable.
enum OncoStatus onco_model_load(const char *path, struct OncoModel **out_model);

// # Safety
// `model` is NULL or came from `onco_model_load` and is not used afterwards.
void onco_model_free(struct OncoModel *model);

// Number of input features the model expects, or 0 for NULL.
//
// # Safety
// `model` is NULL or a live handle.
size_t onco_model_n_features(const struct OncoModel *model);

// Risk scores for a row-major `n_rows x n_cols` matrix.
//
// # Safety
// `x` holds `n_rows*n_cols` values and `out_risk` has room for `n_rows`.
enum OncoStatus onco_model_risk(const struct OncoModel *model,
                                const double *x,
                                size_t n_rows,
                                size_t n_cols,
                                double *out_risk);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ONCOPIPE_H */
