#ifndef WSNSIM_H
#define WSNSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum WsnStatus {
  WSN_STATUS_OK = 0,
  WSN_STATUS_NULL_POINTER = 1,
  WSN_STATUS_INVALID_UTF8 = 2,
  WSN_STATUS_PARSE = 3,
  WSN_STATUS_VALIDATION = 4,
  WSN_STATUS_IO = 5,
  WSN_STATUS_SIMULATION = 6,
  WSN_STATUS_PANIC = 7,
} WsnStatus;

/**
 * The outcome of one run.
 */
typedef struct WsnResult WsnResult;

/**
 * A scenario being configured.
 */
typedef struct WsnScenario WsnScenario;

/**
 * Plain numeric summary of a run. Optional values are NaN when absent.
 */
typedef struct WsnSummary {
  double pdr;
  double mean_delay_s;
  double energy_total_mwh;
  double energy_per_node_mwh;
  double first_node_death_s;
  double detection_latency_s;
  bool detection_triggered;
  uint32_t true_positives;
  uint32_t false_positives;
  double energy_debited_j;
  double energy_initial_j;
} WsnSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * A scenario holding the default parameters.
 */
struct WsnScenario *wsn_scenario_new(void);

/**
 * Loads a scenario file into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum WsnStatus wsn_scenario_load(const char *path, struct WsnScenario **out);

/**
 * Sets one scenario key, using the same names as scenario files.
 *
 * # Safety
 * `s` must come from this library; `key` and `value` must be NUL-terminated strings.
 */
enum WsnStatus wsn_scenario_set(struct WsnScenario *s, const char *key, const char *value);

/**
 * # Safety
 * `s` must be null or come from this library and not be used afterwards.
 */
void wsn_scenario_free(struct WsnScenario *s);

/**
 * Runs the scenario to its end time and stores the outcome in `*out`.
 *
 * # Safety
 * `s` must come from this library and `out` must be writable.
 */
enum WsnStatus wsn_run(const struct WsnScenario *s, struct WsnResult **out);

/**
 * # Safety
 * `r` must come from [`wsn_run`] and `out` must be writable.
 */
enum WsnStatus wsn_result_summary(const struct WsnResult *r, struct WsnSummary *out);

/**
 * Copies the run's CSV row (no header, NUL-terminated) into `buf`.
 * Returns the length the row needs without the NUL; nothing is written when `cap` is too small.
 *
 * # Safety
 * `r` must come from [`wsn_run`]; `buf` must be null or point to `cap` writable bytes.
 */
size_t wsn_result_csv(const struct WsnResult *r, char *buf, size_t cap);

/**
 * # Safety
 * `r` must be null or come from [`wsn_run`] and not be used afterwards.
 */
void wsn_result_free(struct WsnResult *r);

/**
 * The CSV header matching [`wsn_result_csv`] rows. Static; do not free.
 */
const char *wsn_csv_header(void);

/**
 * Copies the last error message of this thread into `buf`, same contract as [`wsn_result_csv`].
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t wsn_last_error(char *buf, size_t cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WSNSIM_H */
