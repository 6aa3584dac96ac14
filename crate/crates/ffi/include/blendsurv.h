#ifndef BLENDSURV_H
#define BLENDSURV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum BsStatus {
  BS_STATUS_OK = 0,
  BS_STATUS_NULL_POINTER = 1,
  BS_STATUS_INVALID_ARGUMENT = 2,
  BS_STATUS_DATA_ERROR = 3,
  BS_STATUS_NUMERICAL_ERROR = 4,
  BS_STATUS_IO_ERROR = 5,
  BS_STATUS_BUFFER_TOO_SMALL = 6,
  BS_STATUS_PANIC = 7,
} BsStatus;

/**
 * Opaque survival dataset.
 */
typedef struct BsDataset BsDataset;

/**
 * Opaque fitted parametric model.
 */
typedef struct BsFittedModel BsFittedModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into the library on this thread.
 */
const char *bs_last_error(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void bs_string_free(char *s);

/**
 * Regularized incomplete beta function I_x(alpha, beta).
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
enum BsStatus bs_beta_cdf(double x, double alpha, double beta, double *out);

/**
 * Blending weight at `t` for the interval [a, b] and horizon T*.
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
enum BsStatus bs_weight(double t,
                        double alpha,
                        double beta,
                        double a,
                        double b,
                        double horizon,
                        double *out);

/**
 * Creates a dataset from `n` times (months) and event flags (0 or 1).
 *
 * # Safety
 * `times` and `events` must point to `n` readable elements; `out` must
 * be a valid pointer. Free the result with [`bs_dataset_free`].
 */
enum BsStatus bs_dataset_new(const double *times,
                             const uint8_t *events,
                             size_t n,
                             struct BsDataset **out);

/**
 * Reads a `time,event[,arm]` CSV file. `arm` may be NULL when the file
 * holds a single arm.
 *
 * # Safety
 * `path` and non-NULL `arm` must be NUL-terminated strings; `out` must be
 * a valid pointer.
 */
enum BsStatus bs_dataset_from_csv(const char *path, const char *arm, struct BsDataset **out);

/**
 * # Safety
 * `data` must be a valid dataset handle; `n_obs` and `n_events` must be
 * valid pointers.
 */
enum BsStatus bs_dataset_counts(const struct BsDataset *data, size_t *n_obs, size_t *n_events);

/**
 * # Safety
 * `data` must be NULL or a handle from this library, not yet freed.
 */
void bs_dataset_free(struct BsDataset *data);

/**
 * Kaplan-Meier survival estimate at `t`.
 *
 * # Safety
 * `data` must be a valid dataset handle and `out` a valid pointer.
 */
enum BsStatus bs_km_survival(const struct BsDataset *data, double t, double *out);

/**
 * Maximum-likelihood fit of a parametric family ("exponential",
 * "weibull", "gompertz", "lognormal" or "loglogistic").
 *
 * # Safety
 * `data` must be a valid dataset handle, `family` a NUL-terminated
 * string and `out` a valid pointer. Free the result with [`bs_fit_free`].
 */
enum BsStatus bs_fit(const struct BsDataset *data, const char *family, struct BsFittedModel **out);

/**
 * Copies the fitted parameters into `params` (capacity `cap`) and stores
 * their count in `len`. Returns `BufferTooSmall` when `cap` is too
 * small; `len` is set either way.
 *
 * # Safety
 * `fit` must be a valid model handle, `params` must have room for `cap`
 * doubles and `len` must be a valid pointer.
 */
enum BsStatus bs_fit_params(const struct BsFittedModel *fit,
                            double *params,
                            size_t cap,
                            size_t *len);

/**
 * Log-likelihood, AIC and convergence flag of a fit. Any output pointer
 * may be NULL.
 *
 * # Safety
 * `fit` must be a valid model handle; non-NULL outputs must be valid.
 */
enum BsStatus bs_fit_summary(const struct BsFittedModel *fit,
                             double *loglik,
                             double *aic,
                             bool *converged);

/**
 * Fitted survival S(t).
 *
 * # Safety
 * `fit` must be a valid model handle and `out` a valid pointer.
 */
enum BsStatus bs_fit_survival(const struct BsFittedModel *fit, double t, double *out);

/**
 * # Safety
 * `fit` must be NULL or a handle from this library, not yet freed.
 */
void bs_fit_free(struct BsFittedModel *fit);

/**
 * Blends one observed and one external survival curve tabulated at the
 * `n` grid points `times` (starting at 0, increasing), writing `n`
 * values to `out`.
 *
 * # Safety
 * `times`, `s_obs`, `s_ext` must hold `n` readable doubles and `out`
 * must have room for `n` doubles.
 */
enum BsStatus bs_blend_survival(const double *times,
                                const double *s_obs,
                                const double *s_ext,
                                size_t n,
                                double alpha,
                                double beta,
                                double a,
                                double b,
                                double horizon,
                                double *out);

/**
 * Synthesizes a dataset from an elicitation spec (JSON) and fits it.
 * Writes a JSON document with the segment counts, warnings and ranked
 * fits to `out_json`; free it with [`bs_string_free`].
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string; `out_json` a valid pointer.
 */
enum BsStatus bs_elicit(const char *spec_json, char **out_json);

/**
 * Runs a scenario file, writing outputs into `out_dir`. A negative
 * `seed` keeps the scenario's own seed. When `out_json` is not NULL it
 * receives the manifest; free it with [`bs_string_free`].
 *
 * # Safety
 * `scenario_path` and `out_dir` must be NUL-terminated strings;
 * `out_json` must be NULL or a valid pointer.
 */
enum BsStatus bs_run_scenario(const char *scenario_path,
                              const char *out_dir,
                              int64_t seed,
                              char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLENDSURV_H */
