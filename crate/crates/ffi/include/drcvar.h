#ifndef DRCVAR_H
#define DRCVAR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DrcvarModel {
  DRCVAR_MODEL_DRCVAR_L2 = 0,
  DRCVAR_MODEL_DRCVAR_L1 = 1,
  DRCVAR_MODEL_SCVAR_L2 = 2,
  DRCVAR_MODEL_SCVAR_L1 = 3,
  DRCVAR_MODEL_TE_L2 = 4,
} DrcvarModel;

typedef enum DrcvarStatus {
  DRCVAR_STATUS_OK = 0,
  // Null pointer, bad UTF-8 or a too-small output buffer.
  DRCVAR_STATUS_INVALID_ARGUMENT = 1,
  DRCVAR_STATUS_VALIDATION = 2,
  DRCVAR_STATUS_DATA = 3,
  DRCVAR_STATUS_NUMERICAL = 4,
  DRCVAR_STATUS_PANIC = 5,
} DrcvarStatus;

typedef struct DrcvarPanel DrcvarPanel;

typedef struct DrcvarReport DrcvarReport;

typedef struct DrcvarSolution DrcvarSolution;

// Solver and protocol settings. Obtain defaults from [`drcvar_options_default`].
typedef struct DrcvarOptions {
  enum DrcvarModel model;
  double tau1;
  double tau2;
  double beta;
  double kappa1;
  double kappa2;
  uintptr_t window;
  uintptr_t hold;
  uintptr_t max_outer_iters;
  uintptr_t max_inner_iters;
  // Nonzero selects the replication starting point, zero the all-zero one.
  int32_t replication_start;
} DrcvarOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the next failing call.
const char *drcvar_last_error(void);

struct DrcvarOptions drcvar_options_default(void);

// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum DrcvarStatus drcvar_panel_load_csv(const char *path, struct DrcvarPanel **out);

// Builds a panel from `n_days` index returns and a row-major `n_days × n_assets` asset matrix.
//
// # Safety
// `index` must point to `n_days` doubles and `assets` to `n_days * n_assets` doubles.
enum DrcvarStatus drcvar_panel_from_arrays(uintptr_t n_days,
                                           uintptr_t n_assets,
                                           const double *index,
                                           const double *assets,
                                           struct DrcvarPanel **out);

// # Safety
// `out` must be writable.
enum DrcvarStatus drcvar_panel_synthetic(uintptr_t n_assets,
                                         uintptr_t n_days,
                                         uint64_t seed,
                                         struct DrcvarPanel **out);

// # Safety
// `panel` must be a live handle or NULL.
uintptr_t drcvar_panel_n_days(const struct DrcvarPanel *panel);

// # Safety
// `panel` must be a live handle or NULL.
uintptr_t drcvar_panel_n_assets(const struct DrcvarPanel *panel);

// # Safety
// `panel` must come from this library and not be used afterwards. NULL is ignored.
void drcvar_panel_free(struct DrcvarPanel *panel);

// Fits the selected model on rows `[row_start, row_end)`.
//
// # Safety
// `panel` and `options` must be valid; `out` must be writable.
enum DrcvarStatus drcvar_solve(const struct DrcvarPanel *panel,
                               const struct DrcvarOptions *options,
                               uintptr_t row_start,
                               uintptr_t row_end,
                               struct DrcvarSolution **out);

// Copies the weights into `buf`, which must hold at least as many entries as the panel has assets.
//
// # Safety
// `buf` must point to `len` writable doubles.
enum DrcvarStatus drcvar_solution_weights(const struct DrcvarSolution *solution,
                                          double *buf,
                                          uintptr_t len);

// Exact objective at the returned point, or NaN for a NULL handle.
//
// # Safety
// `solution` must be a live handle or NULL.
double drcvar_solution_objective(const struct DrcvarSolution *solution);

// 1 if the solver met its stopping rule, 0 otherwise.
//
// # Safety
// `solution` must be a live handle or NULL.
int32_t drcvar_solution_converged(const struct DrcvarSolution *solution);

// # Safety
// `solution` must come from this library and not be used afterwards. NULL is ignored.
void drcvar_solution_free(struct DrcvarSolution *solution);

// # Safety
// `panel` and `options` must be valid; `out` must be writable.
enum DrcvarStatus drcvar_backtest(const struct DrcvarPanel *panel,
                                  const struct DrcvarOptions *options,
                                  struct DrcvarReport **out);

// # Safety
// `report` must be a live handle or NULL.
uintptr_t drcvar_report_t_bar(const struct DrcvarReport *report);

// # Safety
// `report` must be a live handle or NULL.
double drcvar_report_tei(const struct DrcvarReport *report);

// # Safety
// `report` must be a live handle or NULL.
double drcvar_report_teo(const struct DrcvarReport *report);

// The report as a JSON document. Release the string with [`drcvar_string_free`].
//
// # Safety
// `report` must be valid; `out` must be writable.
enum DrcvarStatus drcvar_report_json(const struct DrcvarReport *report, char **out);

// # Safety
// `report` must come from this library and not be used afterwards. NULL is ignored.
void drcvar_report_free(struct DrcvarReport *report);

// # Safety
// `s` must come from this library and not be used afterwards. NULL is ignored.
void drcvar_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DRCVAR_H */
