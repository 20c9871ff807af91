#ifndef WCLASS_SIM_H
#define WCLASS_SIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WcsStatus {
  WCS_STATUS_OK = 0,
  WCS_STATUS_NULL_POINTER = 1,
  WCS_STATUS_INVALID_ARGUMENT = 2,
  WCS_STATUS_PRECONDITION = 3,
  WCS_STATUS_ATTEMPTS_EXHAUSTED = 4,
  WCS_STATUS_INSUFFICIENT_DATA = 5,
  WCS_STATUS_DOMAIN = 6,
  WCS_STATUS_INTERNAL = 7,
} WcsStatus;

/**
 * Protocol parameters.
 */
typedef struct WcsConfig WcsConfig;

/**
 * Aggregate of a batch run.
 */
typedef struct WcsReport WcsReport;

/**
 * A prepared state together with the ideal W state on the same modes.
 */
typedef struct WcsState WcsState;

/**
 * Headline numbers of a report; absent estimates are NaN.
 */
typedef struct WcsReportSummary {
  uint64_t trials;
  uint64_t successes;
  double p_c_hat;
  double mean_time_s;
  double predicted_time_s;
  double c_n_hat;
  double fidelity_mean;
} WcsReportSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *wcs_last_error_message(void);

void wcs_string_free(char *s);

/**
 * Default configuration for `n` parties with zero phases.
 */
enum WcsStatus wcs_config_new(size_t n, struct WcsConfig **out);

/**
 * Configuration from a JSON object with the fields of a report's
 * `config.protocol`; missing fields take their defaults.
 */
enum WcsStatus wcs_config_from_json(const char *json, struct WcsConfig **out);

void wcs_config_free(struct WcsConfig *cfg);

enum WcsStatus wcs_config_set_p_e(struct WcsConfig *cfg, double p_e);

enum WcsStatus wcs_config_set_eta(struct WcsConfig *cfg, double eta);

enum WcsStatus wcs_config_set_seed(struct WcsConfig *cfg, uint64_t seed);

enum WcsStatus wcs_config_set_max_attempts(struct WcsConfig *cfg, uint64_t max_attempts);

enum WcsStatus wcs_config_set_double_pair(struct WcsConfig *cfg, bool enabled);

/**
 * Sets the channel phase of party `party` (1-based); party 1 is the
 * reference and only accepts 0.
 */
enum WcsStatus wcs_config_set_phase(struct WcsConfig *cfg, size_t party, double phase);

/**
 * Prepares one W state with the trial-0 random stream of the configured
 * seed. `attempts` (may be NULL) receives the number of full attempts.
 */
enum WcsStatus wcs_build_w_chain(const struct WcsConfig *cfg,
                                 struct WcsState **out,
                                 uint64_t *attempts);

/**
 * The ideal W state of the configuration.
 */
enum WcsStatus wcs_ideal_w_state(const struct WcsConfig *cfg, struct WcsState **out);

void wcs_state_free(struct WcsState *state);

/**
 * `|⟨W|ψ⟩|²` of the state with the ideal W state on the same modes.
 */
enum WcsStatus wcs_state_fidelity(const struct WcsState *state, double *out);

/**
 * One line per basis ket: `re im : n_1 n_2 ...`.
 */
enum WcsStatus wcs_state_to_text(const struct WcsState *state, char **out);

/**
 * Runs `trials` chain builds. `workers = 0` uses the default thread pool.
 */
enum WcsStatus wcs_run_batch(const struct WcsConfig *cfg,
                             uint64_t trials,
                             size_t workers,
                             struct WcsReport **out);

void wcs_report_free(struct WcsReport *report);

enum WcsStatus wcs_report_summary(const struct WcsReport *report, struct WcsReportSummary *out);

/**
 * The report's `results` object as pretty-printed JSON.
 */
enum WcsStatus wcs_report_to_json(const struct WcsReport *report, char **out);

/**
 * `t0 / ((1 − η)^{2n−1} p_c^n)`.
 */
enum WcsStatus wcs_predicted_generation_time(size_t n,
                                             double eta,
                                             double p_c,
                                             double t0,
                                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WCLASS_SIM_H */
