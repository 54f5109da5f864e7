#ifndef FREEFRONT_H
#define FREEFRONT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FreefrontStatus {
  FREEFRONT_STATUS_OK = 0,
  FREEFRONT_STATUS_NULL_POINTER = 1,
  FREEFRONT_STATUS_INVALID_UTF8 = 2,
  FREEFRONT_STATUS_CONFIG = 3,
  FREEFRONT_STATUS_MODEL_VIOLATION = 4,
  FREEFRONT_STATUS_STABILITY = 5,
  FREEFRONT_STATUS_SOLVER = 6,
  FREEFRONT_STATUS_NO_ROOT_FOUND = 7,
  FREEFRONT_STATUS_BUFFER_TOO_SMALL = 8,
  FREEFRONT_STATUS_IO = 9,
  FREEFRONT_STATUS_PANIC = 10,
  FREEFRONT_STATUS_OTHER = 11,
} FreefrontStatus;

typedef enum FreefrontMethod {
  FREEFRONT_METHOD_FRONT_FIXING = 0,
  FREEFRONT_METHOD_FRONT_TRACKING = 1,
} FreefrontMethod;

// Validated model and run configuration.
typedef struct FreefrontModel FreefrontModel;

// One solved realization.
typedef struct FreefrontRealization FreefrontRealization;

// Ensemble moments.
typedef struct FreefrontStats FreefrontStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length plus one, or 0 when
// there is no error.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t freefront_last_error_message(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *freefront_version(void);

// Parses and validates a TOML configuration.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be writable.
enum FreefrontStatus freefront_model_from_toml(const char *toml, struct FreefrontModel **out_model);

// # Safety
// `model` must come from [`freefront_model_from_toml`] or be null.
void freefront_model_free(struct FreefrontModel *model);

// Writes the configuration as parsed, in JSON, NUL-terminated. `required`
// (optional) receives the buffer size needed.
//
// # Safety
// `model` must be valid; `buf` null or `len` writable bytes.
enum FreefrontStatus freefront_model_config_json(const struct FreefrontModel *model,
                                                 char *buf,
                                                 size_t len,
                                                 size_t *required);

// Step-size limits of both schemes at the model's `M` and `eps`.
//
// # Safety
// `model` must be valid; outputs must be writable.
enum FreefrontStatus freefront_stability_limits(const struct FreefrontModel *model,
                                                double *ff,
                                                double *ft);

// Threshold radius at the largest diffusion and whether `H0` reaches it.
//
// # Safety
// `model` must be valid; outputs must be writable.
enum FreefrontStatus freefront_rstar(const struct FreefrontModel *model,
                                     double *r_star,
                                     bool *guaranteed);

// Solves realization `index` (the point sample for a deterministic model).
//
// # Safety
// `model` must be valid; `out_realization` writable.
enum FreefrontStatus freefront_solve(const struct FreefrontModel *model,
                                     enum FreefrontMethod method,
                                     size_t index,
                                     struct FreefrontRealization **out_realization);

// # Safety
// `r` must come from [`freefront_solve`] or be null.
void freefront_realization_free(struct FreefrontRealization *r);

// Front position at the horizon; NaN for a null handle.
//
// # Safety
// `r` must be valid or null.
double freefront_realization_final_front(const struct FreefrontRealization *r);

// Number of active nodes at the horizon; 0 for a null handle.
//
// # Safety
// `r` must be valid or null.
size_t freefront_realization_node_count(const struct FreefrontRealization *r);

// Length of the final profile; 0 for a null handle.
//
// # Safety
// `r` must be valid or null.
size_t freefront_realization_profile_len(const struct FreefrontRealization *r);

// Copies the final radii and population values.
//
// # Safety
// `r` must be valid; `radii` and `values` must hold `len` doubles.
enum FreefrontStatus freefront_realization_profile(const struct FreefrontRealization *r,
                                                   double *radii,
                                                   double *values,
                                                   size_t len);

// Runs `k` realizations with the given seed and worker count
// (0 selects the global pool).
//
// # Safety
// `model` must be valid; `out_stats` writable.
enum FreefrontStatus freefront_ensemble(const struct FreefrontModel *model,
                                        enum FreefrontMethod method,
                                        size_t k,
                                        uint64_t seed,
                                        size_t workers,
                                        struct FreefrontStats **out_stats);

// # Safety
// `s` must come from [`freefront_ensemble`] or be null.
void freefront_stats_free(struct FreefrontStats *s);

// Number of recorded time levels of the front moments.
//
// # Safety
// `s` must be valid or null.
size_t freefront_stats_front_len(const struct FreefrontStats *s);

// Number of profile entries of the population moments.
//
// # Safety
// `s` must be valid or null.
size_t freefront_stats_profile_len(const struct FreefrontStats *s);

// Copies mean and standard deviation of the front over time.
//
// # Safety
// `s` must be valid; `mean` and `std` must hold `len` doubles.
enum FreefrontStatus freefront_stats_front(const struct FreefrontStats *s,
                                           double *mean,
                                           double *std,
                                           size_t len);

// Copies mean and standard deviation of the final population.
//
// # Safety
// `s` must be valid; `mean` and `std` must hold `len` doubles.
enum FreefrontStatus freefront_stats_profile(const struct FreefrontStats *s,
                                             double *mean,
                                             double *std,
                                             size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FREEFRONT_H */
