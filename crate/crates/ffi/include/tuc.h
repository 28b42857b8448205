#ifndef TUC_H
#define TUC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TucStatus {
  TUC_STATUS_OK = 0,
  TUC_STATUS_NULL_POINTER = 1,
  TUC_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad input: config, network, weights, controls or arguments.
   */
  TUC_STATUS_INVALID_INPUT = 3,
  /**
   * The Riccati solver did not converge.
   */
  TUC_STATUS_NO_CONVERGENCE = 4,
  TUC_STATUS_IO = 5,
  /**
   * Output buffer too small; the required length is still reported.
   */
  TUC_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  TUC_STATUS_PANIC = 7,
  TUC_STATUS_INTERNAL = 8,
} TucStatus;

/**
 * Grid network.
 */
typedef struct TucNetwork TucNetwork;

/**
 * Completed simulation run.
 */
typedef struct TucRun TucRun;

/**
 * Synthesized feedback controller.
 */
typedef struct TucSynthesis TucSynthesis;

/**
 * Red durations and second-stage green of one junction.
 */
typedef struct TucDependentControls {
  double red_first;
  double red_second;
  double green_second;
} TucDependentControls;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *tuc_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tuc_version(void);

/**
 * Webster cycle for lost time `lost_time_s` and load `load`, clamped to
 * `[c_min, c_max]`.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `double`.
 */
enum TucStatus tuc_webster_cycle(double lost_time_s,
                                 double load,
                                 double c_min,
                                 double c_max,
                                 double *out);

/**
 * Red durations implied by green `g` and yellows `y1`, `y2` over `cycle`.
 *
 * # Safety
 * `out` must be null or point to a writable `TucDependentControls`.
 */
enum TucStatus tuc_dependent_controls(double g,
                                      double y1,
                                      double y2,
                                      double cycle,
                                      struct TucDependentControls *out);

/**
 * Build a `rows` x `cols` grid with links of `link_length_m` and
 * saturation flow `saturation_flow_veh_h`.
 *
 * # Safety
 * `out` must be null or point to writable memory for one pointer.
 */
enum TucStatus tuc_network_grid(size_t rows,
                                size_t cols,
                                double link_length_m,
                                double saturation_flow_veh_h,
                                struct TucNetwork **out);

/**
 * # Safety
 * `net` must be null or a live network handle; `junctions`, `links` and
 * `circuits` must each be null or writable.
 */
enum TucStatus tuc_network_counts(const struct TucNetwork *net,
                                  size_t *junctions,
                                  size_t *links,
                                  size_t *circuits);

/**
 * # Safety
 * `net` must be null or a handle from `tuc_network_grid` not yet freed.
 */
void tuc_network_free(struct TucNetwork *net);

/**
 * Synthesize the controller of a scenario given as JSON.
 *
 * # Safety
 * `config_json` must be null or a NUL-terminated string; `out` must be
 * null or writable.
 */
enum TucStatus tuc_synthesize(const char *config_json, struct TucSynthesis **out);

/**
 * Gain shape: `controls` rows by `states` columns.
 *
 * # Safety
 * `syn` must be null or a live synthesis handle; `states` and `controls`
 * must each be null or writable.
 */
enum TucStatus tuc_synthesis_shape(const struct TucSynthesis *syn,
                                   size_t *states,
                                   size_t *controls);

/**
 * Copy the gain into `buf` row-major. `len` is the buffer length in
 * doubles; the required length is written to `needed` when non-null.
 *
 * # Safety
 * `syn` must be null or a live synthesis handle; `buf` must be null or
 * point to `len` writable doubles.
 */
enum TucStatus tuc_synthesis_gain(const struct TucSynthesis *syn,
                                  double *buf,
                                  size_t len,
                                  size_t *needed);

/**
 * Riccati residual and closed-loop spectral radius.
 *
 * # Safety
 * `syn` must be null or a live synthesis handle; `residual` and `radius`
 * must each be null or writable.
 */
enum TucStatus tuc_synthesis_quality(const struct TucSynthesis *syn,
                                     double *residual,
                                     double *radius);

/**
 * # Safety
 * `syn` must be null or a handle from `tuc_synthesize` not yet freed.
 */
void tuc_synthesis_free(struct TucSynthesis *syn);

/**
 * Run the closed loop for a scenario given as JSON.
 *
 * # Safety
 * `config_json` must be null or a NUL-terminated string; `out` must be
 * null or writable.
 */
enum TucStatus tuc_run_from_json(const char *config_json, struct TucRun **out);

/**
 * Summary of a run as JSON. The string is owned by the handle.
 *
 * # Safety
 * `run` must be null or a live run handle; `out` must be null or writable.
 */
enum TucStatus tuc_run_summary(const struct TucRun *run, const char **out);

/**
 * Final running vehicles, cumulative ended trips and number of cycles.
 *
 * # Safety
 * `run` must be null or a live run handle; the out pointers must each be
 * null or writable.
 */
enum TucStatus tuc_run_totals(const struct TucRun *run,
                              uint64_t *running,
                              uint64_t *ended,
                              size_t *cycles);

/**
 * Write cycle_log.csv, trips.csv, circuits.csv and summary.json into `dir`.
 *
 * # Safety
 * `run` must be null or a live run handle; `dir` must be null or a
 * NUL-terminated string.
 */
enum TucStatus tuc_run_write_outputs(const struct TucRun *run, const char *dir);

/**
 * # Safety
 * `run` must be null or a handle from `tuc_run_from_json` not yet freed.
 */
void tuc_run_free(struct TucRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TUC_H */
