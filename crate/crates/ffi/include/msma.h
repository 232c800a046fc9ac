#ifndef MSMA_H
#define MSMA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum MsmaStatus {
  MSMA_STATUS_OK = 0,
  MSMA_STATUS_NULL_POINTER = 1,
  MSMA_STATUS_INVALID_ARGUMENT = 2,
  MSMA_STATUS_PARSE = 3,
  MSMA_STATUS_VALIDATION = 4,
  MSMA_STATUS_IO = 5,
  MSMA_STATUS_NUMERICAL = 6,
  MSMA_STATUS_RUNTIME = 7,
  /**
   * The requested value is undefined (for example mAP without ground truth).
   */
  MSMA_STATUS_NOT_AVAILABLE = 8,
  MSMA_STATUS_PANIC = 9,
} MsmaStatus;

/**
 * Result of one simulation run.
 */
typedef struct MsmaRun MsmaRun;

/**
 * Parsed, validated scenario.
 */
typedef struct MsmaScenario MsmaScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length, 0 when there is none.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t msma_last_error(char *buf, size_t len);

/**
 * Parses a scenario from a JSON string.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MsmaStatus msma_scenario_parse(const char *json, struct MsmaScenario **out);

/**
 * Loads a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MsmaStatus msma_scenario_load(const char *path, struct MsmaScenario **out);

/**
 * # Safety
 * `scenario` must be null or come from `msma_scenario_parse`/`msma_scenario_load`.
 */
void msma_scenario_free(struct MsmaScenario *scenario);

/**
 * Number of ticks a run of this scenario simulates.
 *
 * # Safety
 * Pointers must be valid.
 */
enum MsmaStatus msma_scenario_tick_count(const struct MsmaScenario *scenario, uint64_t *out);

/**
 * Runs the scenario. `ego` takes an [`MsmaEgoModel`] value and `topology` an
 * [`MsmaTopology`] value; `seed` overrides the scenario seed when `use_seed`
 * is true.
 *
 * # Safety
 * `scenario` must be valid and `out` a valid pointer.
 */
enum MsmaStatus msma_run(const struct MsmaScenario *scenario,
                         uint32_t ego,
                         uint32_t topology,
                         bool use_seed,
                         uint64_t seed,
                         struct MsmaRun **out);

/**
 * # Safety
 * `run` must be null or come from `msma_run`.
 */
void msma_run_free(struct MsmaRun *run);

/**
 * Mean average precision over classes with ground truth.
 *
 * # Safety
 * Pointers must be valid.
 */
enum MsmaStatus msma_run_map(const struct MsmaRun *run, double *out);

/**
 * Number of evaluated (post burn-in) ticks.
 *
 * # Safety
 * Pointers must be valid.
 */
enum MsmaStatus msma_run_evaluated_ticks(const struct MsmaRun *run, size_t *out);

/**
 * True/false positive and false negative counts of the `index`-th evaluated tick.
 *
 * # Safety
 * Pointers must be valid.
 */
enum MsmaStatus msma_run_counts(const struct MsmaRun *run,
                                size_t index,
                                size_t *tp,
                                size_t *fp,
                                size_t *fn_);

/**
 * Covariance intersection of two 6-state estimates. Covariances are 36
 * values in row-major order.
 *
 * # Safety
 * All pointers must reference arrays of the stated sizes.
 */
enum MsmaStatus msma_covariance_intersection(const double *mean_a,
                                             const double *cov_a,
                                             const double *mean_b,
                                             const double *cov_b,
                                             double *out_mean,
                                             double *out_cov,
                                             double *out_omega);

/**
 * Library version as a static NUL-terminated string.
 */
const char *msma_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSMA_H */
