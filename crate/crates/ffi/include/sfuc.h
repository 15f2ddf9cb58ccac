#ifndef SFUC_H
#define SFUC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SfucStatus {
  SFUC_STATUS_OK = 0,
  SFUC_STATUS_NULL_POINTER = 1,
  SFUC_STATUS_INVALID_ARGUMENT = 2,
  SFUC_STATUS_INADMISSIBLE = 3,
  SFUC_STATUS_NUMERICAL = 4,
  SFUC_STATUS_IO = 5,
  SFUC_STATUS_UTF8 = 6,
  SFUC_STATUS_OUT_OF_RANGE = 7,
  SFUC_STATUS_PANIC = 8,
} SfucStatus;

typedef enum SfucBoundary {
  SFUC_BOUNDARY_DIRICHLET = 0,
  SFUC_BOUNDARY_PERIODIC = 1,
} SfucBoundary;

/**
 * Opaque experiment configuration.
 */
typedef struct SfucConfig SfucConfig;

/**
 * Opaque list of observability records.
 */
typedef struct SfucRecords SfucRecords;

/**
 * Plain view of one record.
 */
typedef struct SfucRecordView {
  uint64_t seed;
  double delta;
  double eigenvalue;
  double ratio;
  double zeta_term;
  double log_bound;
  double log_margin;
  bool passed;
  bool trivial_pass;
  /**
   * 0 eigenfunction, 1 projector sample, 2 inequality pair.
   */
  uint32_t psi_kind;
} SfucRecordView;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *sfuc_last_error(void);

/**
 * Library version as a static string.
 */
const char *sfuc_version(void);

/**
 * Default configuration.
 */
struct SfucConfig *sfuc_config_new(void);

/**
 * Parse a flat-dotted-key JSON configuration.
 *
 * # Safety
 * `json` must be a NUL-terminated string, `out` a valid pointer.
 */
enum SfucStatus sfuc_config_from_json(const char *json, struct SfucConfig **out);

/**
 * # Safety
 * `cfg` must come from this library and not be used afterwards; NULL is ignored.
 */
void sfuc_config_free(struct SfucConfig *cfg);

/**
 * Set one numeric field by dotted key, e.g. `"model.theta1"`.
 *
 * # Safety
 * `cfg` must be a live handle, `key` a NUL-terminated string.
 */
enum SfucStatus sfuc_config_set_number(struct SfucConfig *cfg, const char *key, double value);

/**
 * Validate the configuration as the CLI does before running experiments.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum SfucStatus sfuc_config_validate(const struct SfucConfig *cfg);

/**
 * Natural log of the scale-free constant at the configured parameters.
 *
 * # Safety
 * `cfg` must be a live handle, `out` valid.
 */
enum SfucStatus sfuc_log_c_sfuc(const struct SfucConfig *cfg, double *out);

/**
 * Full constants report as JSON; release with [`sfuc_string_free`].
 *
 * # Safety
 * `cfg` must be a live handle, `out` valid.
 */
enum SfucStatus sfuc_constants_json(const struct SfucConfig *cfg, double energy, char **out);

/**
 * # Safety
 * `s` must come from this library; NULL is ignored.
 */
void sfuc_string_free(char *s);

/**
 * Observability ratio of a real grid function for a centered or seeded
 * sequence (`random_seed < 0` selects centers).
 *
 * # Safety
 * `psi` must point to `len` doubles, `out` valid.
 */
enum SfucStatus sfuc_observability_ratio(size_t d,
                                         double l,
                                         double g,
                                         double h,
                                         enum SfucBoundary bc,
                                         double delta,
                                         int64_t random_seed,
                                         const double *psi,
                                         size_t len,
                                         double *out);

/**
 * Run the observability trials of the configuration.
 *
 * # Safety
 * `cfg` must be a live handle, `out` valid.
 */
enum SfucStatus sfuc_verify(const struct SfucConfig *cfg, struct SfucRecords **out);

/**
 * # Safety
 * `recs` must be a live handle or NULL (length 0).
 */
size_t sfuc_records_len(const struct SfucRecords *recs);

/**
 * # Safety
 * `recs` must be a live handle, `out` valid.
 */
enum SfucStatus sfuc_records_get(const struct SfucRecords *recs,
                                 size_t index,
                                 struct SfucRecordView *out);

/**
 * # Safety
 * `recs` must come from this library; NULL is ignored.
 */
void sfuc_records_free(struct SfucRecords *recs);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SFUC_H */
