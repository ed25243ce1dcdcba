#ifndef PROGNOS_H
#define PROGNOS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a call. Values 3 to 13 mirror the CLI exit codes.
typedef enum PrognosStatus {
  PROGNOS_STATUS_OK = 0,
  PROGNOS_STATUS_NULL_POINTER = 1,
  PROGNOS_STATUS_INVALID_ARGUMENT = 2,
  PROGNOS_STATUS_PARSE = 3,
  PROGNOS_STATUS_INTEGRITY = 4,
  PROGNOS_STATUS_PARAMETER = 5,
  PROGNOS_STATUS_CONFIG = 6,
  PROGNOS_STATUS_INVARIANT = 7,
  PROGNOS_STATUS_SHAPE = 8,
  PROGNOS_STATUS_NUMERICAL = 9,
  PROGNOS_STATUS_MISSING_STAGE = 10,
  PROGNOS_STATUS_LOCKED = 11,
  PROGNOS_STATUS_IO = 12,
  PROGNOS_STATUS_FORMAT = 13,
  PROGNOS_STATUS_PANIC = 99,
} PrognosStatus;

typedef struct PrognosEmbedding PrognosEmbedding;

// A trained joint model with its input scaler.
typedef struct PrognosModel PrognosModel;

// Run-to-failure or test units loaded from a C-MAPSS text file.
typedef struct PrognosUnits PrognosUnits;

// Layout parameters; start from [`prognos_umap_params_default`].
typedef struct PrognosUmapParams {
  size_t n_neighbors;
  double min_dist;
  size_t n_components;
  size_t epochs;
  uint64_t seed;
} PrognosUmapParams;

typedef struct PrognosMetrics {
  double rmse;
  double mae;
  double mape;
  double mr;
  size_t n_instances;
  size_t n_mape_instances;
} PrognosMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call into this library on the same thread.
const char *prognos_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *prognos_version(void);

// DTW distance between two row-major sequences with `dim` columns.
//
// # Safety
// `p` and `q` must hold `p_rows * dim` and `q_rows * dim` values; `out`
// must be writable.
enum PrognosStatus prognos_dtw(const double *p,
                               size_t p_rows,
                               const double *q,
                               size_t q_rows,
                               size_t dim,
                               double *out);

// Load units from `path`. `truth_path` may be null for run-to-failure
// training files; when given, the file is read as a truncated test split.
//
// # Safety
// Paths must be NUL-terminated; `out` must be writable.
enum PrognosStatus prognos_units_load(const char *path_ptr,
                                      const char *truth_path,
                                      struct PrognosUnits **out);

// Number of units.
//
// # Safety
// `units` must come from [`prognos_units_load`]; `out` must be writable.
enum PrognosStatus prognos_units_count(const struct PrognosUnits *units, size_t *out);

// Unit id, cycle count and sensor count of the unit at `index`.
//
// # Safety
// `units` must come from [`prognos_units_load`]; outputs must be writable.
enum PrognosStatus prognos_units_shape(const struct PrognosUnits *units,
                                       size_t index,
                                       uint32_t *unit_id,
                                       size_t *n_cycles,
                                       size_t *n_sensors);

// Copy the row-major `n_cycles * n_sensors` readings of unit `index`.
//
// # Safety
// `buf` must hold `buf_len` writable values.
enum PrognosStatus prognos_units_values(const struct PrognosUnits *units,
                                        size_t index,
                                        double *buf,
                                        size_t buf_len);

// # Safety
// `units` must be null or come from [`prognos_units_load`], freed once.
void prognos_units_free(struct PrognosUnits *units);

struct PrognosUmapParams prognos_umap_params_default(void);

// Embed `n_rows` row-major points with `n_features` columns.
//
// # Safety
// `points` must hold `n_rows * n_features` values; `params` and `out` must
// be valid pointers.
enum PrognosStatus prognos_embed(const double *points,
                                 size_t n_rows,
                                 size_t n_features,
                                 const struct PrognosUmapParams *params,
                                 struct PrognosEmbedding **out);

// Rows and columns of an embedding.
//
// # Safety
// `e` must come from [`prognos_embed`]; outputs must be writable.
enum PrognosStatus prognos_embedding_shape(const struct PrognosEmbedding *e,
                                           size_t *n_rows,
                                           size_t *dim);

// Copy the row-major coordinates into `buf`, which must hold exactly
// `n_rows * dim` values.
//
// # Safety
// `buf` must hold `buf_len` writable values.
enum PrognosStatus prognos_embedding_copy(const struct PrognosEmbedding *e,
                                          double *buf,
                                          size_t buf_len);

// # Safety
// `e` must be null or come from [`prognos_embed`], freed once.
void prognos_embedding_free(struct PrognosEmbedding *e);

// # Safety
// `path_ptr` must be NUL-terminated; `out` must be writable.
enum PrognosStatus prognos_model_load(const char *path_ptr, struct PrognosModel **out);

// Window length, sensor count and mode count the model expects.
//
// # Safety
// `m` must come from [`prognos_model_load`]; outputs must be writable.
enum PrognosStatus prognos_model_shape(const struct PrognosModel *m,
                                       size_t *ntw,
                                       size_t *n_sensors,
                                       size_t *n_modes);

// Min-max scale a raw `ntw * n_sensors` window in place with the scaler
// the model was trained with.
//
// # Safety
// `window` must hold `len` writable values.
enum PrognosStatus prognos_model_scale(const struct PrognosModel *m, double *window, size_t len);

// RUL estimate and mode probabilities for one scaled window.
// `probs` may be null when `probs_len` is 0; otherwise it must hold
// exactly `n_modes` values.
//
// # Safety
// `window` must hold `len` values, `rul` must be writable and `probs`
// must hold `probs_len` writable values.
enum PrognosStatus prognos_model_predict(const struct PrognosModel *m,
                                         const double *window,
                                         size_t len,
                                         double *rul,
                                         double *probs,
                                         size_t probs_len);

// # Safety
// `m` must be null or come from [`prognos_model_load`], freed once.
void prognos_model_free(struct PrognosModel *m);

// Score `n` predictions. Monotonicity is measured per unit in cycle order.
//
// # Safety
// All input arrays must hold `n` values; `out` must be writable.
enum PrognosStatus prognos_metrics(const uint32_t *unit_ids,
                                   const uint32_t *cycles,
                                   const double *y_true,
                                   const double *y_pred,
                                   size_t n,
                                   struct PrognosMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROGNOS_H */
