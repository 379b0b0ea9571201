#ifndef BSL_H
#define BSL_H

/* Generated by cbindgen from the bsl-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum BslStatus {
  BSL_STATUS_OK = 0,
  BSL_STATUS_NULL_ARGUMENT = 1,
  BSL_STATUS_INVALID_UTF8 = 2,
  BSL_STATUS_SCHEMA = 3,
  BSL_STATUS_INVALID_PARAMETER = 4,
  BSL_STATUS_NUMERICAL = 5,
  BSL_STATUS_IO = 6,
  BSL_STATUS_OUT_OF_RANGE = 7,
  BSL_STATUS_BUFFER_TOO_SMALL = 8,
  /**
   * The prediction has no finite value (super-polynomial decay).
   */
  BSL_STATUS_NO_VALUE = 9,
  BSL_STATUS_PANIC = 10,
} BslStatus;

/**
 * Singular-value predictor for a boundary profile and a space parameter.
 */
typedef struct BslPredictor BslPredictor;

/**
 * Eigenvalues of a compressed Toeplitz operator.
 */
typedef struct BslSpectrum BslSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *bsl_version(void);

/**
 * Copies the calling thread's last error message into `buf`.
 *
 * # Safety
 * `buf` must point to `len` writable bytes (or be null); `needed` may be null.
 */
enum BslStatus bsl_last_error(char *buf, size_t len, size_t *needed);

/**
 * Computes the spectrum described by a JSON object {"space", "measure", "dimension"}.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BslStatus bsl_spectrum_compute(const char *config_json, struct BslSpectrum **out);

/**
 * Number of eigenvalues held by the handle (0 for a null handle).
 *
 * # Safety
 * `spectrum` must be null or a live handle.
 */
size_t bsl_spectrum_len(const struct BslSpectrum *spectrum);

/**
 * Copies all eigenvalues (nonincreasing) into `buf`, which must hold at least `bsl_spectrum_len` doubles.
 *
 * # Safety
 * `spectrum` must be a live handle and `buf` point to `len` writable doubles.
 */
enum BslStatus bsl_spectrum_values(const struct BslSpectrum *spectrum,
                                   double *buf,
                                   size_t len);

/**
 * Eigenvalue with 0-based index `i`.
 *
 * # Safety
 * `spectrum` must be a live handle and `value` a valid pointer.
 */
enum BslStatus bsl_spectrum_get(const struct BslSpectrum *spectrum, size_t i, double *value);

/**
 * Releases a spectrum handle; null is ignored.
 *
 * # Safety
 * `spectrum` must be null or a handle not yet freed.
 */
void bsl_spectrum_free(struct BslSpectrum *spectrum);

/**
 * Creates a predictor from a boundary-profile JSON object, e.g. {"family":"kappa-log","kappa":3.14}.
 *
 * # Safety
 * `profile_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BslStatus bsl_predictor_new(const char *profile_json,
                                 double alpha,
                                 struct BslPredictor **out);

/**
 * Predicted s_n. Returns `NoValue` on the super-polynomial branch.
 *
 * # Safety
 * `predictor` must be a live handle and `value` a valid pointer.
 */
enum BslStatus bsl_predictor_eval(const struct BslPredictor *predictor, double n, double *value);

/**
 * Releases a predictor handle; null is ignored.
 *
 * # Safety
 * `predictor` must be null or a handle not yet freed.
 */
void bsl_predictor_free(struct BslPredictor *predictor);

/**
 * Runs an experiment config (JSON text) writing into `out_dir`; the report path is copied
 * into `report_path` when a buffer is given.
 *
 * # Safety
 * String arguments must be NUL-terminated; `report_path` must be null or point to `len`
 * writable bytes; `needed` may be null.
 */
enum BslStatus bsl_run_experiment(const char *config_json,
                                  const char *out_dir,
                                  char *report_path,
                                  size_t len,
                                  size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BSL_H */
