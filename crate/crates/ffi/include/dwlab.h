#ifndef DWLAB_H
#define DWLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

/**
 * Columns of a [`DwWaveRun`]; absent values are NaN.
 */
typedef enum DwSeries {
  DW_SERIES_TIME = 0,
  DW_SERIES_L2A_U = 1,
  DW_SERIES_EA = 2,
  DW_SERIES_E1 = 3,
  DW_SERIES_E2 = 4,
  DW_SERIES_HARDY_MARGIN = 5,
  DW_SERIES_MONO_VIOLATION = 6,
} DwSeries;

typedef enum DwStatus {
  DW_STATUS_OK = 0,
  DW_STATUS_NULL_POINTER = 1,
  DW_STATUS_INVALID_ARGUMENT = 2,
  DW_STATUS_PARSE_ERROR = 3,
  DW_STATUS_VALIDATION_ERROR = 4,
  DW_STATUS_RUNTIME_ERROR = 5,
  DW_STATUS_PANIC = 6,
} DwStatus;

/**
 * A finished orchestrated run and its verdict.
 */
typedef struct DwExperiment DwExperiment;

/**
 * In-memory wave run with energy records.
 */
typedef struct DwWaveRun DwWaveRun;

/**
 * Auxiliary weight `A_ε` on a radial grid.
 */
typedef struct DwWeight DwWeight;

typedef struct DwWeightReport {
  double epsilon;
  double h;
  double r_eps;
  double lambda_eps;
  double ellip_min;
  double ellip_max;
  double ellip_tol;
  bool ellip_pass;
  double growth_lower;
  double growth_upper;
  double min_value;
  double grad_ratio_sup;
  bool grad_ratio_pass;
  double tail_ratio_min;
  double tail_ratio_max;
} DwWeightReport;

/**
 * Predicted decay exponents; absent entries are NaN.
 */
typedef struct DwRateTable {
  uint32_t dim;
  double alpha;
  double cor2_exp;
  double thm1_exp;
  double propmain_ea_exp;
  double propmain_e1_exp;
  double heat_l1_exp;
  double lambda0;
  double p_alpha;
  bool delta_zero_allowed;
} DwRateTable;

typedef struct DwDecayFit {
  double slope;
  double stderr;
  double intercept;
  double t_lo;
  double t_hi;
  uintptr_t n_points;
  double residual_rms;
} DwDecayFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next `dw_*` call on the same thread.
 */
const char *dw_last_error_message(void);

const char *dw_version(void);

/**
 * Builds `A_ε` for `a(r) = a0 r^alpha` on `n` nodes of `[r0, r_max]`.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum DwStatus dw_weight_new(uint32_t dim,
                            double alpha,
                            double a0,
                            double r0,
                            double r_max,
                            uintptr_t n,
                            double eps,
                            struct DwWeight **out);

/**
 * # Safety
 * `w` must come from [`dw_weight_new`]; `out` must be writable.
 */
enum DwStatus dw_weight_report(const struct DwWeight *w, struct DwWeightReport *out);

/**
 * Number of grid nodes, 0 for NULL.
 *
 * # Safety
 * `w` must be NULL or come from [`dw_weight_new`].
 */
uintptr_t dw_weight_len(const struct DwWeight *w);

/**
 * Copies `A_ε` and (if `da_out` is not NULL) `A_ε'` into buffers of `len`
 * doubles; `len` must equal [`dw_weight_len`].
 *
 * # Safety
 * Buffers must hold `len` doubles.
 */
enum DwStatus dw_weight_values(const struct DwWeight *w,
                               double *a_out,
                               double *da_out,
                               uintptr_t len);

/**
 * # Safety
 * `w` must be NULL or come from [`dw_weight_new`], and not be used again.
 */
void dw_weight_free(struct DwWeight *w);

/**
 * # Safety
 * `out` must be writable.
 */
enum DwStatus dw_rate_table(uint32_t dim, double alpha, double eps, struct DwRateTable *out);

/**
 * Log-log least squares of `v` against `t` over `[t_lo, t_hi]`.
 *
 * # Safety
 * `t` and `v` must hold `len` doubles; `out` must be writable.
 */
enum DwStatus dw_fit_decay_slope(const double *t,
                                 const double *v,
                                 uintptr_t len,
                                 double t_lo,
                                 double t_hi,
                                 struct DwDecayFit *out);

/**
 * Runs `command` (`weight`, `wave`, `heat`, `compare`, `transform-check`,
 * `duhamel`) for a JSON config, writing artifacts into `output_dir`.
 * A run whose checks fail still succeeds; see [`dw_experiment_all_pass`].
 *
 * # Safety
 * Strings must be NUL-terminated; `out` must be writable.
 */
enum DwStatus dw_experiment_run(const char *config_json,
                                const char *command,
                                const char *output_dir,
                                struct DwExperiment **out);

/**
 * # Safety
 * `e` must be NULL or come from [`dw_experiment_run`].
 */
bool dw_experiment_all_pass(const struct DwExperiment *e);

/**
 * Verdict JSON owned by the handle, or NULL.
 *
 * # Safety
 * `e` must be NULL or come from [`dw_experiment_run`].
 */
const char *dw_experiment_verdict_json(const struct DwExperiment *e);

/**
 * # Safety
 * `e` must be NULL or come from [`dw_experiment_run`], and not be used again.
 */
void dw_experiment_free(struct DwExperiment *e);

/**
 * Runs the wave solver for a JSON config without writing files.
 *
 * # Safety
 * `config_json` must be NUL-terminated; `out` must be writable.
 */
enum DwStatus dw_wave_run_new(const char *config_json, struct DwWaveRun **out);

/**
 * Number of records, 0 for NULL.
 *
 * # Safety
 * `run` must be NULL or come from [`dw_wave_run_new`].
 */
uintptr_t dw_wave_run_len(const struct DwWaveRun *run);

/**
 * Largest `|u|` seen beyond `R0 + t + 2 dr`; NaN for NULL.
 *
 * # Safety
 * `run` must be NULL or come from [`dw_wave_run_new`].
 */
double dw_wave_run_max_leak(const struct DwWaveRun *run);

/**
 * Copies one column into `out`, which must hold [`dw_wave_run_len`] doubles.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum DwStatus dw_wave_run_series(const struct DwWaveRun *run,
                                 enum DwSeries series,
                                 double *out,
                                 uintptr_t len);

/**
 * # Safety
 * `run` must be NULL or come from [`dw_wave_run_new`], and not be used again.
 */
void dw_wave_run_free(struct DwWaveRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DWLAB_H */
