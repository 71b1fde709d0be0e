#ifndef SUBDIFF_H
#define SUBDIFF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum SubdiffStatus {
  SUBDIFF_STATUS_OK = 0,
  SUBDIFF_STATUS_NULL_POINTER = 1,
  SUBDIFF_STATUS_INVALID_UTF8 = 2,
  SUBDIFF_STATUS_CONFIG = 3,
  SUBDIFF_STATUS_CONDITION = 4,
  SUBDIFF_STATUS_SOLVER = 5,
  SUBDIFF_STATUS_OUT_OF_RANGE = 6,
  SUBDIFF_STATUS_BUFFER_TOO_SMALL = 7,
  SUBDIFF_STATUS_PANIC = 8,
  SUBDIFF_STATUS_OTHER = 9,
} SubdiffStatus;

// Outcome of a verdict.
typedef enum SubdiffVerdict {
  SUBDIFF_VERDICT_PASS = 0,
  SUBDIFF_VERDICT_FAIL = 1,
  SUBDIFF_VERDICT_ABSTAIN = 2,
} SubdiffVerdict;

// Completed trajectory with its decay report.
typedef struct SubdiffRun SubdiffRun;

// Parsed scenario configuration.
typedef struct SubdiffScenario SubdiffScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the message of the last failure on this thread (NUL-terminated, truncated to `len`).
// Returns the full message length in bytes.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t subdiff_last_error(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *subdiff_version(void);

// E_{α,β}(−x) for x ≥ 0.
//
// # Safety
// `out` must be a valid pointer.
enum SubdiffStatus subdiff_mittag_leffler(double alpha, double beta, double x, double *out);

// Loads a built-in scenario by name.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum SubdiffStatus subdiff_scenario_builtin(const char *name, struct SubdiffScenario **out);

// Parses a scenario from TOML text.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum SubdiffStatus subdiff_scenario_from_toml(const char *text, struct SubdiffScenario **out);

// Applies a dotted `key=value` override; the scenario is unchanged on failure.
//
// # Safety
// `scenario` must come from this library; `assignment` must be NUL-terminated.
enum SubdiffStatus subdiff_scenario_set(struct SubdiffScenario *scenario, const char *assignment);

// Number of spatial nodes.
//
// # Safety
// `scenario` must come from this library and `out` be valid.
enum SubdiffStatus subdiff_scenario_nx(const struct SubdiffScenario *scenario, size_t *out);

// Solves for the steady state and copies its nodal values into `buf`.
//
// # Safety
// `scenario` must come from this library; `buf` must hold `len` values.
enum SubdiffStatus subdiff_scenario_steady(const struct SubdiffScenario *scenario,
                                           double *buf,
                                           size_t len);

// # Safety
// `scenario` must come from this library (or be null) and not be used afterwards.
void subdiff_scenario_free(struct SubdiffScenario *scenario);

// Integrates the scenario and evaluates the decay verdicts.
//
// # Safety
// `scenario` must come from this library and `out` be valid.
enum SubdiffStatus subdiff_run(const struct SubdiffScenario *scenario, struct SubdiffRun **out);

// Number of time nodes (steps + 1).
//
// # Safety
// `run` must come from this library and `out` be valid.
enum SubdiffStatus subdiff_run_len(const struct SubdiffRun *run, size_t *out);

// Copies the time nodes.
//
// # Safety
// `run` must come from this library; `buf` must hold `len` values.
enum SubdiffStatus subdiff_run_times(const struct SubdiffRun *run, double *buf, size_t len);

// Copies ‖u(t_n) − u∞‖²_{L²} for every node.
//
// # Safety
// `run` must come from this library; `buf` must hold `len` values.
enum SubdiffStatus subdiff_run_l2_sq(const struct SubdiffRun *run, double *buf, size_t len);

// Copies the state u(t_n).
//
// # Safety
// `run` must come from this library; `buf` must hold `len` values.
enum SubdiffStatus subdiff_run_state(const struct SubdiffRun *run,
                                     size_t step,
                                     double *buf,
                                     size_t len);

// Overall decay verdict and the fitted exponent (α < 1) or rate (α = 1); NaN without a fit.
//
// # Safety
// `run` must come from this library; `verdict` and `fitted` must be valid.
enum SubdiffStatus subdiff_run_decay(const struct SubdiffRun *run,
                                     enum SubdiffVerdict *verdict,
                                     double *fitted);

// # Safety
// `run` must come from this library (or be null) and not be used afterwards.
void subdiff_run_free(struct SubdiffRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SUBDIFF_H */
