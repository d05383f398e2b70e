#ifndef MSDOA_H
#define MSDOA_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MsdoaStatus {
  MSDOA_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8 or an undersized buffer.
   */
  MSDOA_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Configuration or input rejected.
   */
  MSDOA_STATUS_VALIDATION = 2,
  /**
   * Numerical failure during a run.
   */
  MSDOA_STATUS_NUMERICAL = 3,
  MSDOA_STATUS_IO = 4,
  /**
   * A panic was caught at the boundary.
   */
  MSDOA_STATUS_INTERNAL = 5,
} MsdoaStatus;

/**
 * Parsed, validated experiment configuration.
 */
typedef struct MsdoaConfig MsdoaConfig;

/**
 * Result of a Monte Carlo sweep.
 */
typedef struct MsdoaSweep MsdoaSweep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread; empty after a successful call. The
 * pointer stays valid until the next call on the same thread.
 */
const char *msdoa_last_error(void);

/**
 * Library version, static string.
 */
const char *msdoa_version(void);

/**
 * Parses a TOML configuration document.
 *
 * # Safety
 * `text` must be a nul-terminated string and `out` a valid pointer.
 */
enum MsdoaStatus msdoa_config_parse(const char *text, struct MsdoaConfig **out);

/**
 * Reads and parses a configuration file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum MsdoaStatus msdoa_config_load(const char *path, struct MsdoaConfig **out);

/**
 * Applies a `section.key=value` override and revalidates. The handle is
 * left unchanged on failure.
 *
 * # Safety
 * `cfg` must come from this library; `assignment` must be nul-terminated.
 */
enum MsdoaStatus msdoa_config_set(struct MsdoaConfig *cfg, const char *assignment);

/**
 * Re-checks every precondition.
 *
 * # Safety
 * `cfg` must come from this library.
 */
enum MsdoaStatus msdoa_config_validate(const struct MsdoaConfig *cfg);

/**
 * Serializes the configuration; free the string with [`msdoa_string_free`].
 *
 * # Safety
 * `cfg` must come from this library and `out` be a valid pointer.
 */
enum MsdoaStatus msdoa_config_emit(const struct MsdoaConfig *cfg, char **out);

/**
 * # Safety
 * `cfg` must come from this library or be null.
 */
void msdoa_config_free(struct MsdoaConfig *cfg);

/**
 * Runs the configured sweep. `threads = 0` keeps the configured or default
 * worker count.
 *
 * # Safety
 * `cfg` must come from this library and `out` be a valid pointer.
 */
enum MsdoaStatus msdoa_run_sweep(const struct MsdoaConfig *cfg,
                                 uint32_t threads,
                                 struct MsdoaSweep **out);

/**
 * Number of rows, 0 for null.
 *
 * # Safety
 * `sweep` must come from this library or be null.
 */
size_t msdoa_sweep_rows(const struct MsdoaSweep *sweep);

/**
 * Number of sources (CRB columns), 0 for null.
 *
 * # Safety
 * `sweep` must come from this library or be null.
 */
size_t msdoa_sweep_sources(const struct MsdoaSweep *sweep);

/**
 * PR and RMSE (degrees) of one row.
 *
 * # Safety
 * `sweep` must come from this library; `pr` and `rmse_deg` must be valid.
 */
enum MsdoaStatus msdoa_sweep_row(const struct MsdoaSweep *sweep,
                                 size_t row,
                                 double *pr,
                                 double *rmse_deg);

/**
 * Copies the per-source square-root CRB (degrees) of one row into `out`,
 * which must hold at least [`msdoa_sweep_sources`] values.
 *
 * # Safety
 * `sweep` must come from this library; `out` must point to `len` doubles.
 */
enum MsdoaStatus msdoa_sweep_crb(const struct MsdoaSweep *sweep,
                                 size_t row,
                                 double *out,
                                 size_t len);

/**
 * The sweep as CSV; free the string with [`msdoa_string_free`].
 *
 * # Safety
 * `sweep` must come from this library and `out` be a valid pointer.
 */
enum MsdoaStatus msdoa_sweep_csv(const struct MsdoaSweep *sweep, char **out);

/**
 * # Safety
 * `sweep` must come from this library or be null.
 */
void msdoa_sweep_free(struct MsdoaSweep *sweep);

/**
 * Square-root CRB table as CSV; free with [`msdoa_string_free`].
 *
 * # Safety
 * `cfg` must come from this library and `out` be a valid pointer.
 */
enum MsdoaStatus msdoa_crb_csv(const struct MsdoaConfig *cfg, uint32_t threads, char **out);

/**
 * Runs one trial and writes its CSV dumps into `out_dir`.
 *
 * # Safety
 * `cfg` must come from this library; `out_dir` must be nul-terminated.
 */
enum MsdoaStatus msdoa_run_single(const struct MsdoaConfig *cfg, const char *out_dir, bool raw);

/**
 * Estimates directions from `n_samples` interleaved I/Q samples taken at the
 * configured rate. Up to `capacity` estimates (degrees) are written; `found`
 * receives the number available.
 *
 * # Safety
 * `iq` must point to `2·n_samples` doubles, `theta_deg` and `phi_deg` to
 * `capacity` doubles each, `found` must be valid.
 */
enum MsdoaStatus msdoa_estimate_series(const struct MsdoaConfig *cfg,
                                       const double *iq,
                                       size_t n_samples,
                                       double *theta_deg,
                                       double *phi_deg,
                                       size_t capacity,
                                       size_t *found);

/**
 * Frees a string returned by this library.
 *
 * # Safety
 * `s` must come from this library or be null.
 */
void msdoa_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSDOA_H */
