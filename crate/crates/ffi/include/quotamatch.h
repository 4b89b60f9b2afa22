#ifndef QUOTAMATCH_H
#define QUOTAMATCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum QmStatus {
  QM_STATUS_OK = 0,
  // Null pointer, bad UTF-8 or an unparseable argument.
  QM_STATUS_INVALID_ARGUMENT = 1,
  QM_STATUS_CONFIG = 2,
  QM_STATUS_PARSE = 3,
  QM_STATUS_RANGE = 4,
  QM_STATUS_REFERENTIAL = 5,
  QM_STATUS_DOMAIN = 6,
  QM_STATUS_ESTIMATION = 7,
  QM_STATUS_IO = 8,
  // The list violates the quota (from `qm_verify_compliance`).
  QM_STATUS_NOT_COMPLIANT = 9,
  // A panic was caught at the boundary.
  QM_STATUS_INTERNAL = 10,
} QmStatus;

// A generated or loaded population.
typedef struct QmPopulation QmPopulation;

// Counterfactual report for one quota rule.
typedef struct QmReport QmReport;

// Message describing the last failure on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *qm_last_error(void);

// Library version as a static NUL-terminated string.
const char *qm_version(void);

// Quota rate (percent) for a program with `n_scholarship` holders among
// `n_applicants`, under `rule` ("none", "plus2floor5", "floor5",
// "fixed:<r>").
//
// # Safety
// `rule` must be a valid NUL-terminated string and `out` writable.
enum QmStatus qm_quota_rate(size_t n_scholarship,
                            size_t n_applicants,
                            const char *rule,
                            double *out);

// Calling order for an academic list given as scholarship flags: writes
// `len` indices into the academic list to `out_order`.
//
// # Safety
// `flags` must point to `len` bools and `out_order` to room for `len`
// indices.
enum QmStatus qm_apply_quota(const bool *flags, size_t len, double q, size_t *out_order);

// Check a called list (scholarship flags in calling order) against rate
// `q`. Returns `QM_STATUS_NOT_COMPLIANT` and writes the 1-based length of
// the first failing prefix to `out_first_violation` (if non-null) when the
// list breaks the quota; writes 0 when it complies.
//
// # Safety
// `flags` must point to `len` bools; `out_first_violation` may be null.
enum QmStatus qm_verify_compliance(const bool *flags,
                                   size_t len,
                                   double q,
                                   size_t *out_first_violation);

// Generate a population from a scenario config in JSON; a null or empty
// `config_json` selects the default calibrated scenario.
//
// # Safety
// `config_json` must be null or a NUL-terminated string; `out` writable.
enum QmStatus qm_population_generate(const char *config_json, struct QmPopulation **out);

// Load a population directory (applicants.csv, programs.csv and optional
// committee_scores.csv).
//
// # Safety
// `dir` must be a NUL-terminated string; `out` writable.
enum QmStatus qm_population_load(const char *dir, struct QmPopulation **out);

// # Safety
// `pop` must come from this library; `dir` must be a NUL-terminated string.
enum QmStatus qm_population_save(const struct QmPopulation *pop, const char *dir);

// Number of applicants, or 0 for a null handle.
//
// # Safety
// `pop` must be null or come from this library.
size_t qm_population_applicants(const struct QmPopulation *pop);

// Number of scholarship applicants, or 0 for a null handle.
//
// # Safety
// `pop` must be null or come from this library.
size_t qm_population_scholarship(const struct QmPopulation *pop);

// # Safety
// `pop` must be null or come from this library, and not be used afterwards.
void qm_population_free(struct QmPopulation *pop);

// Run the quota-off and quota-on arms under `rule` and build the report.
// `track` is null or "all" for everyone, otherwise "general",
// "technological" or "vocational".
//
// # Safety
// `pop` must come from this library; strings NUL-terminated; `out`
// writable.
enum QmStatus qm_run_pair(const struct QmPopulation *pop,
                          const char *rule,
                          const char *track,
                          struct QmReport **out);

// Complier count, or 0 for a null handle.
//
// # Safety
// `report` must be null or come from this library.
size_t qm_report_compliers(const struct QmReport *report);

// Mean prestige gain among scored compliers. `QM_STATUS_DOMAIN` when there
// are none.
//
// # Safety
// `report` must come from this library; `out` writable.
enum QmStatus qm_report_ate(const struct QmReport *report, double *out);

// ATE scaled by the compliance share, or NaN for a null handle.
//
// # Safety
// `report` must be null or come from this library.
double qm_report_itt(const struct QmReport *report);

// Share of scholarship applicants who are compliers, or NaN for a null
// handle.
//
// # Safety
// `report` must be null or come from this library.
double qm_report_compliance(const struct QmReport *report);

// The full report as JSON, or null on failure. Free with `qm_string_free`.
//
// # Safety
// `report` must come from this library.
char *qm_report_to_json(const struct QmReport *report);

// # Safety
// `report` must be null or come from this library, and not be used
// afterwards.
void qm_report_free(struct QmReport *report);

// Raw and matched admissibility gaps from an applications CSV, as JSON
// written to `out_json` (free with `qm_string_free`).
//
// # Safety
// `path` must be a NUL-terminated string; `out_json` writable.
enum QmStatus qm_cem_from_csv(const char *path, size_t resamples, uint64_t seed, char **out_json);

// Release a string returned by this library.
//
// # Safety
// `s` must be null or a string returned by this library, freed once.
void qm_string_free(char *s);

#endif  /* QUOTAMATCH_H */
