#ifndef REGPACK_H
#define REGPACK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RegpackStatus {
  REGPACK_STATUS_OK = 0,
  REGPACK_STATUS_INVALID_ARGUMENT = 1,
  REGPACK_STATUS_PARSE = 2,
  REGPACK_STATUS_NUMERICAL = 3,
  REGPACK_STATUS_IO = 4,
  REGPACK_STATUS_PANIC = 5,
} RegpackStatus;

/**
 * Result of one pipeline run.
 */
typedef struct RegpackReport RegpackReport;

/**
 * Parsed scenario plus the overrides applied so far.
 */
typedef struct RegpackScenario RegpackScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *regpack_last_error(void);

/**
 * Library version, static string.
 */
const char *regpack_version(void);

/**
 * Parses a scenario from TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RegpackStatus regpack_scenario_parse(const char *toml, struct RegpackScenario **out);

/**
 * Loads a built-in scenario by name (without the `builtin:` prefix).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RegpackStatus regpack_scenario_builtin(const char *name, struct RegpackScenario **out);

/**
 * Applies a `key=value` override; the scenario is unchanged on failure.
 *
 * # Safety
 * `scenario` must come from this library; `key_value` must be a
 * NUL-terminated string.
 */
enum RegpackStatus regpack_scenario_set(struct RegpackScenario *scenario, const char *key_value);

/**
 * # Safety
 * `scenario` must come from this library or be null.
 */
void regpack_scenario_free(struct RegpackScenario *scenario);

/**
 * Runs the pipeline and writes artifacts under `out_dir`. A run whose
 * gates fail still returns `Ok`; query [`regpack_report_passed`].
 *
 * # Safety
 * `scenario` must come from this library, `out_dir` must be a
 * NUL-terminated path and `out` a valid pointer.
 */
enum RegpackStatus regpack_run(const struct RegpackScenario *scenario,
                               const char *out_dir,
                               int summary_only,
                               struct RegpackReport **out);

/**
 * Whether every gate declared by the scenario passed (1) or not (0).
 *
 * # Safety
 * `report` must come from this library and `out` be a valid pointer.
 */
enum RegpackStatus regpack_report_passed(const struct RegpackReport *report, int *out);

/**
 * Relative tracking error over the last fifth of the horizon.
 *
 * # Safety
 * `report` must come from this library and `out` be a valid pointer.
 */
enum RegpackStatus regpack_report_tail_error(const struct RegpackReport *report, double *out);

/**
 * The run's metrics as JSON. Owned by the report.
 *
 * # Safety
 * `report` must come from this library or be null.
 */
const char *regpack_report_metrics_json(const struct RegpackReport *report);

/**
 * # Safety
 * `report` must come from this library or be null.
 */
void regpack_report_free(struct RegpackReport *report);

/**
 * Gain `k` (length `n`) placing the eigenvalues of `A + b·k` at the given
 * poles. `a` is `n×n` row-major; complex poles must come in conjugate
 * pairs.
 *
 * # Safety
 * `a` must hold `n*n` values, `b`, `poles_re`, `poles_im` and `k_out`
 * `n` values each.
 */
enum RegpackStatus regpack_place_poles(const double *a,
                                       const double *b,
                                       size_t n,
                                       const double *poles_re,
                                       const double *poles_im,
                                       double *k_out);

/**
 * Moore–Penrose pseudoinverse of the `rows×cols` row-major matrix `m`,
 * written row-major (`cols×rows`) to `out`; `rank_out` may be null.
 *
 * # Safety
 * `m` and `out` must hold `rows*cols` values.
 */
enum RegpackStatus regpack_pinv(const double *m,
                                size_t rows,
                                size_t cols,
                                double rel_tol,
                                double *out,
                                size_t *rank_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REGPACK_H */
