#ifndef COVERT_LAB_H
#define COVERT_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; 2–4 match the CLI exit codes.
 */
typedef enum ClStatus {
  CL_STATUS_OK = 0,
  CL_STATUS_CONFIG = 2,
  CL_STATUS_DATA = 3,
  CL_STATUS_NUMERIC = 4,
  CL_STATUS_NULL_POINTER = 10,
  CL_STATUS_INVALID_ARGUMENT = 11,
  CL_STATUS_PANIC = 12,
} ClStatus;

typedef enum ClDenominatorMode {
  CL_DENOMINATOR_MODE_INCLUDE_NOT_SURE = 0,
  CL_DENOMINATOR_MODE_EXCLUDE_NOT_SURE = 1,
} ClDenominatorMode;

/**
 * Loaded judgment records.
 */
typedef struct ClJudgments ClJudgments;

/**
 * A synthetic-world configuration.
 */
typedef struct ClWorld ClWorld;

/**
 * Judgment counts by truth (rows) and response (columns).
 */
typedef struct ClConfusion {
  uint64_t ai_as_ai;
  uint64_t ai_as_human;
  uint64_t ai_not_sure;
  uint64_t human_as_ai;
  uint64_t human_as_human;
  uint64_t human_not_sure;
} ClConfusion;

typedef struct ClSdtResult {
  uint64_t n_ai;
  uint64_t n_human;
  uint64_t hits;
  uint64_t false_alarms;
  double h_raw;
  double f_raw;
  double h_star;
  double f_star;
  double d_prime;
  double beta;
  double hit_lo;
  double hit_hi;
  double fa_lo;
  double fa_hi;
} ClSdtResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into this library on the same thread.
 */
const char *cl_last_error(void);

/**
 * Library version as a static string.
 */
const char *cl_version(void);

/**
 * d′, β and Wilson intervals from a confusion table.
 *
 * # Safety
 * `counts` and `out` must be valid pointers.
 */
enum ClStatus cl_sdt_from_counts(const struct ClConfusion *counts,
                                 enum ClDenominatorMode mode,
                                 struct ClSdtResult *out);

/**
 * Percentile bootstrap interval for d′ (resampling judgments per class).
 *
 * # Safety
 * `counts`, `lo` and `hi` must be valid pointers.
 */
enum ClStatus cl_bootstrap_dprime_ci(const struct ClConfusion *counts,
                                     enum ClDenominatorMode mode,
                                     size_t iterations,
                                     uint64_t seed,
                                     double *lo,
                                     double *hi);

/**
 * Wilson score interval for `successes` out of `n` at confidence `level`.
 *
 * # Safety
 * `lo` and `hi` must be valid pointers.
 */
enum ClStatus cl_wilson_interval(uint64_t successes,
                                 uint64_t n,
                                 double level,
                                 double *lo,
                                 double *hi);

/**
 * Loads truth-joined judgments from an event log, run or table directory,
 * or a judgments CSV with a truth column.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer. The handle
 * written to `*out` must be released with [`cl_judgments_free`].
 */
enum ClStatus cl_judgments_load(const char *path, struct ClJudgments **out);

/**
 * Number of records held.
 *
 * # Safety
 * `h` must be a live handle or NULL (which yields 0).
 */
size_t cl_judgments_len(const struct ClJudgments *h);

/**
 * Confusion counts of the held judgments.
 *
 * # Safety
 * `h` must be a live handle; `out` a valid pointer.
 */
enum ClStatus cl_judgments_confusion(const struct ClJudgments *h, struct ClConfusion *out);

/**
 * Signal detection over the held judgments.
 *
 * # Safety
 * `h` must be a live handle; `out` a valid pointer.
 */
enum ClStatus cl_judgments_sdt(const struct ClJudgments *h,
                               enum ClDenominatorMode mode,
                               struct ClSdtResult *out);

/**
 * Truth and response of record `i`: 0 = AI, 1 = Human, 2 = Not sure.
 *
 * # Safety
 * `h` must be a live handle; `truth` and `judgment` valid pointers.
 */
enum ClStatus cl_judgments_get(const struct ClJudgments *h,
                               size_t i,
                               uint8_t *truth,
                               uint8_t *judgment);

/**
 * # Safety
 * `h` must come from [`cl_judgments_load`] or [`cl_world_simulate`] and not
 * be used afterwards. NULL is ignored.
 */
void cl_judgments_free(struct ClJudgments *h);

/**
 * A world from TOML text, or the default world when `toml` is NULL.
 *
 * # Safety
 * `toml` must be NULL or a NUL-terminated string; `out` a valid pointer.
 * Release the handle with [`cl_world_free`].
 */
enum ClStatus cl_world_new(const char *toml, struct ClWorld **out);

/**
 * # Safety
 * `w` must be a live handle.
 */
enum ClStatus cl_world_set_seed(struct ClWorld *w, uint64_t seed);

/**
 * # Safety
 * `w` must be a live handle.
 */
enum ClStatus cl_world_set_groups(struct ClWorld *w, size_t n_groups);

/**
 * Runs the world with the built-in dictionary. When `out_dir` is non-NULL
 * the event log and tables are written there; when `judgments` is non-NULL
 * it receives a handle to the truth-joined judgments.
 *
 * # Safety
 * `w` must be a live handle; `out_dir` NULL or a NUL-terminated string;
 * `judgments` NULL or a valid pointer.
 */
enum ClStatus cl_world_simulate(const struct ClWorld *w,
                                const char *out_dir,
                                struct ClJudgments **judgments);

/**
 * # Safety
 * `w` must come from [`cl_world_new`] and not be used afterwards. NULL is
 * ignored.
 */
void cl_world_free(struct ClWorld *w);

/**
 * Runs the full analysis pipeline over `input` into `out_dir`. `config_toml`
 * is report configuration text, or NULL for defaults. Numeric failures of
 * individual models yield `Numeric` after all artifacts are written.
 *
 * # Safety
 * `input` and `out_dir` must be NUL-terminated strings; `config_toml` NULL
 * or a NUL-terminated string.
 */
enum ClStatus cl_report_run(const char *input, const char *out_dir, const char *config_toml);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COVERT_LAB_H */
