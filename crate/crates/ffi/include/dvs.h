/* Copyright (c) The DVS Ledger Contributors */
/* SPDX-License-Identifier: Apache-2.0 */

#ifndef DVS_H
#define DVS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes.
 */
typedef enum DvsStatus {
  DVS_STATUS_OK = 0,
  DVS_STATUS_NULL_POINTER = 1,
  DVS_STATUS_INVALID_UTF8 = 2,
  /*
   Unreadable or invalid input files.
   */
  DVS_STATUS_CONFIG_ERROR = 3,
  DVS_STATUS_RUNTIME_ERROR = 4,
  /*
   The scenario ran into voltage collapse; its results are available.
   */
  DVS_STATUS_COLLAPSE = 5,
  /*
   The call was used out of order, e.g. reading results before a run.
   */
  DVS_STATUS_INVALID_STATE = 6,
  DVS_STATUS_PANIC = 7,
} DvsStatus;

/*
 A loaded scenario and, once run, its results.
 */
typedef struct DvsScenario DvsScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *dvs_last_error(void);

/*
 Library version as a static string.
 */
const char *dvs_version(void);

/*
 Releases a string returned by this library. NULL is ignored.

 # Safety
 `s` must come from this library and not have been freed.
 */
void dvs_string_free(char *s);

/*
 Loads a scenario file; relative paths inside it resolve against its
 directory.

 # Safety
 `path` must be a nul-terminated string; `out` must be writable.
 */
enum DvsStatus dvs_scenario_open(const char *path, struct DvsScenario **out);

/*
 Replaces the scenario's seed.

 # Safety
 `scenario` must be a live handle.
 */
enum DvsStatus dvs_scenario_set_seed(struct DvsScenario *scenario, uint64_t seed);

/*
 Initializes a fresh network and runs the scenario in logical time.
 Returns `DVS_STATUS_COLLAPSE` when the grid collapsed; results are
 available either way.

 # Safety
 `scenario` must be a live handle.
 */
enum DvsStatus dvs_scenario_run(struct DvsScenario *scenario);

/*
 The last run's log as JSON lines.

 # Safety
 `scenario` must be a live handle; `out` must be writable.
 */
enum DvsStatus dvs_scenario_log_jsonl(const struct DvsScenario *scenario, char **out);

/*
 Head hash of `channel` after the last run.

 # Safety
 `scenario` must be a live handle; `channel` a nul-terminated string;
 `out` must be writable.
 */
enum DvsStatus dvs_scenario_chain_hash(const struct DvsScenario *scenario,
                                       const char *channel,
                                       char **out);

/*
 The last run's ledger of `channel`, one block per line.

 # Safety
 `scenario` must be a live handle; `channel` a nul-terminated string;
 `out` must be writable.
 */
enum DvsStatus dvs_scenario_export_jsonl(const struct DvsScenario *scenario,
                                         const char *channel,
                                         char **out);

/*
 Releases a scenario handle. NULL is ignored.

 # Safety
 `scenario` must come from [`dvs_scenario_open`] and not have been freed.
 */
void dvs_scenario_free(struct DvsScenario *scenario);

/*
 Runs a benchmark suite file and returns the full report as JSON. When
 `override_seed` is non-zero, `seed` replaces the suite's base seed.

 # Safety
 `suite_path` must be a nul-terminated string; `out` must be writable.
 */
enum DvsStatus dvs_bench_run(const char *suite_path,
                             int32_t override_seed,
                             uint64_t seed,
                             char **out);

/*
 Audits a ledger exported as JSON lines. `first_broken` receives the
 number of the first bad block, or -1 when the chain is intact.

 # Safety
 `jsonl` must be a nul-terminated string; `first_broken` must be writable.
 */
enum DvsStatus dvs_verify_chain_jsonl(const char *jsonl, int64_t *first_broken);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DVS_H */
