/* C interface to the byzsim simulator. */

#ifndef BYZSIM_H
#define BYZSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ByzsimStatus {
  BYZSIM_STATUS_OK = 0,
  BYZSIM_STATUS_NULL_POINTER = 1,
  BYZSIM_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed JSON or an invalid configuration field.
   */
  BYZSIM_STATUS_CONFIG = 3,
  BYZSIM_STATUS_INVALID_ARGUMENT = 4,
  BYZSIM_STATUS_IO = 5,
  /**
   * A Rust panic was caught; the library state is still usable.
   */
  BYZSIM_STATUS_PANIC = 6,
} ByzsimStatus;

/**
 * Opaque run configuration.
 */
typedef struct ByzsimConfig ByzsimConfig;

/**
 * Opaque run result.
 */
typedef struct ByzsimTrace ByzsimTrace;

/**
 * One round of a trace.
 */
typedef struct ByzsimRound {
  uint64_t t;
  double gap;
  double grad_norm_sq;
  double byz_fraction;
  uint64_t cost;
  uint32_t level;
  bool failsafe;
  bool dynamic_round;
} ByzsimRound;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *byzsim_last_error_message(void);

/**
 * Parses and validates a JSON run config.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum ByzsimStatus byzsim_config_from_json(const char *json, struct ByzsimConfig **out);

/**
 * # Safety
 * `cfg` must be null or a handle from [`byzsim_config_from_json`] not yet freed.
 */
void byzsim_config_free(struct ByzsimConfig *cfg);

/**
 * Runs the config with its own seed.
 *
 * # Safety
 * `cfg` must be a live config handle; `out` must be writable.
 */
enum ByzsimStatus byzsim_run(const struct ByzsimConfig *cfg, struct ByzsimTrace **out);

/**
 * Runs the config with an explicit seed.
 *
 * # Safety
 * `cfg` must be a live config handle; `out` must be writable.
 */
enum ByzsimStatus byzsim_run_seeded(const struct ByzsimConfig *cfg,
                                    uint64_t seed,
                                    struct ByzsimTrace **out);

/**
 * Number of rounds, 0 for a null handle.
 *
 * # Safety
 * `trace` must be null or a live trace handle.
 */
size_t byzsim_trace_len(const struct ByzsimTrace *trace);

/**
 * Copies round `index` (0-based) into `out`.
 *
 * # Safety
 * `trace` must be a live trace handle; `out` must be writable.
 */
enum ByzsimStatus byzsim_trace_round(const struct ByzsimTrace *trace,
                                     size_t index,
                                     struct ByzsimRound *out);

/**
 * Optimality gap at the final iterate.
 *
 * # Safety
 * `trace` must be a live trace handle; `out` must be writable.
 */
enum ByzsimStatus byzsim_trace_final_gap(const struct ByzsimTrace *trace, double *out);

/**
 * Writes the per-round CSV (run id 0) to `path`.
 *
 * # Safety
 * `trace` must be a live trace handle; `path` a NUL-terminated string.
 */
enum ByzsimStatus byzsim_trace_write_csv(const struct ByzsimTrace *trace, const char *path);

/**
 * # Safety
 * `trace` must be null or a live trace handle.
 */
void byzsim_trace_free(struct ByzsimTrace *trace);

/**
 * Aggregates `m` row-major messages of dimension `dim` with the rule
 * described by `spec_json` (e.g. `{"kind":"cwtm","trim_k":1}`), writing
 * `dim` values to `out`.
 *
 * # Safety
 * `msgs` must hold `m * dim` doubles and `out` room for `dim`.
 */
enum ByzsimStatus byzsim_aggregate(const char *spec_json,
                                   const double *msgs,
                                   size_t m,
                                   size_t dim,
                                   double *out);

/**
 * Runs a property suite; `passed` receives whether every check passed.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `passed` must be writable.
 */
enum ByzsimStatus byzsim_verify_suite(const char *name, bool *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BYZSIM_H */
