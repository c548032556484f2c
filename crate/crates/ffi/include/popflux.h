#ifndef POPFLUX_H
#define POPFLUX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PfStatus {
  PF_STATUS_OK = 0,
  PF_STATUS_NULL_ARGUMENT = 1,
  PF_STATUS_INVALID_UTF8 = 2,
  PF_STATUS_INPUT = 3,
  PF_STATUS_CONFIG = 4,
  PF_STATUS_FORMAT = 5,
  PF_STATUS_IO = 6,
  PF_STATUS_SCHEME_MISMATCH = 7,
  PF_STATUS_MODEL = 8,
  PF_STATUS_UNDEFINED = 9,
  PF_STATUS_OUT_OF_RANGE = 10,
  PF_STATUS_PANIC = 99,
} PfStatus;

/**
 * Static population on the grid of the counts it was loaded against.
 */
typedef struct PfCensus PfCensus;

/**
 * Pseudo-counts in device-hours.
 */
typedef struct PfCounts PfCounts;

/**
 * Posterior population estimate.
 */
typedef struct PfEstimate PfEstimate;

/**
 * One row of an estimate.
 */
typedef struct PfEstimateRow {
  int64_t cell_ix;
  int64_t cell_iy;
  uint8_t level;
  int64_t interval_index;
  double pseudo_count;
  double population;
} PfEstimateRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *pf_version(void);

/**
 * Message for the last failed call on this thread; empty after success.
 * The pointer stays valid until the next popflux call on the same thread.
 */
const char *pf_last_error(void);

/**
 * Reads a counts CSV. The scheme comes from the file header, falling back
 * to `config_text` (flat `key = value` text, may be null for defaults).
 *
 * # Safety
 * `path` and `config_text` must be null or NUL-terminated strings; `out`
 * must be a valid pointer.
 */
enum PfStatus pf_counts_read(const char *path,
                             const char *config_text,
                             struct PfCounts **out_counts);

/**
 * Empty counts on the grid described by `config_text`.
 *
 * # Safety
 * `config_text` must be null or a NUL-terminated string; `out` must be valid.
 */
enum PfStatus pf_counts_new(const char *config_text, struct PfCounts **out_counts);

/**
 * Adds device-hours to one key; the cell level must match the grid.
 *
 * # Safety
 * `counts` must be a live handle from this library.
 */
enum PfStatus pf_counts_add(struct PfCounts *counts,
                            int64_t cell_ix,
                            int64_t cell_iy,
                            int64_t interval_index,
                            double device_hours);

/**
 * Total device-hours.
 *
 * # Safety
 * `counts` must be a live handle; `total` must be valid.
 */
enum PfStatus pf_counts_total(const struct PfCounts *counts, double *total);

/**
 * # Safety
 * `counts` must be null or a handle not yet freed.
 */
void pf_counts_free(struct PfCounts *counts);

/**
 * Reads a census CSV onto the grid of `counts`.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `counts` a live handle and `out`
 * a valid pointer.
 */
enum PfStatus pf_census_read(const char *path,
                             const struct PfCounts *counts,
                             struct PfCensus **out_census);

/**
 * Census from dense values in row-major cell order of the grid of `counts`.
 *
 * # Safety
 * `values` must point to `len` doubles; `counts` must be a live handle.
 */
enum PfStatus pf_census_from_values(const struct PfCounts *counts,
                                    const double *values,
                                    size_t len,
                                    struct PfCensus **out_census);

/**
 * Total census population.
 *
 * # Safety
 * `census` must be a live handle; `total` must be valid.
 */
enum PfStatus pf_census_total(const struct PfCensus *census, double *total);

/**
 * # Safety
 * `census` must be null or a handle not yet freed.
 */
void pf_census_free(struct PfCensus *census);

/**
 * Posterior population with prior strength `lambda`; `likelihood_only`
 * non-zero requires `lambda == 0`.
 *
 * # Safety
 * Handles must be live; `out` must be valid.
 */
enum PfStatus pf_estimate(const struct PfCounts *counts,
                          const struct PfCensus *census,
                          double lambda,
                          int likelihood_only,
                          struct PfEstimate **out_estimate);

/**
 * Number of rows: every cell for every estimated interval.
 *
 * # Safety
 * `estimate` must be a live handle; `len` must be valid.
 */
enum PfStatus pf_estimate_len(const struct PfEstimate *estimate, size_t *len);

/**
 * Row `index`, ordered by interval then cell.
 *
 * # Safety
 * `estimate` must be a live handle; `row` must be valid.
 */
enum PfStatus pf_estimate_row(const struct PfEstimate *estimate,
                              size_t index,
                              struct PfEstimateRow *row);

/**
 * Writes the estimate as CSV, as the `estimate` subcommand does.
 *
 * # Safety
 * `estimate` must be a live handle and `path` a NUL-terminated string.
 */
enum PfStatus pf_estimate_write(const struct PfEstimate *estimate, const char *path);

/**
 * # Safety
 * `estimate` must be null or a handle not yet freed.
 */
void pf_estimate_free(struct PfEstimate *estimate);

/**
 * Runs the command line with `argc` arguments (program name first) and
 * stores its exit code.
 *
 * # Safety
 * `argv` must point to `argc` NUL-terminated strings.
 */
enum PfStatus pf_run_cli(size_t argc, const char *const *argv, int *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POPFLUX_H */
