#ifndef MSFEM_EDDY_H
#define MSFEM_EDDY_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MsfemStatus {
  MSFEM_STATUS_OK = 0,
  MSFEM_STATUS_NULL_POINTER = 1,
  MSFEM_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Configuration or mesh input rejected.
   */
  MSFEM_STATUS_CONFIG = 3,
  /**
   * Singular system or failed solve.
   */
  MSFEM_STATUS_SOLVER = 4,
  MSFEM_STATUS_IO = 5,
  /**
   * The output buffer is shorter than required; nothing was written.
   */
  MSFEM_STATUS_BUFFER_TOO_SMALL = 6,
  MSFEM_STATUS_PANIC = 7,
} MsfemStatus;

/**
 * A configured problem (mesh, materials, excitation, orders).
 */
typedef struct MsfemProblem MsfemProblem;

/**
 * A solved problem with its error indicators.
 */
typedef struct MsfemResult MsfemResult;

/**
 * Thickness integrals of one material weighting, in the order of the
 * library's `CoefficientTable`.
 */
typedef struct MsfemCoefficientTable {
  double phi1hat_sq;
  double phi2_sq;
  double dphi2_sq;
  double phi0_phi2;
  double phi3hat_sq;
  double phi1hat_phi3hat;
  double phi0_sq_full;
  double phi0_sq_sheet;
} MsfemCoefficientTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into the library on the same thread.
 */
const char *msfem_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *msfem_version(void);

/**
 * Loads a TOML configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MsfemStatus msfem_problem_from_file(const char *path, struct MsfemProblem **out);

/**
 * Parses a TOML configuration held in memory; relative mesh paths are
 * resolved against the working directory.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum MsfemStatus msfem_problem_from_str(const char *text, struct MsfemProblem **out);

/**
 * The shipped slab benchmark with `cells_per_mm` cells per millimetre.
 *
 * # Safety
 * `out` must be writable.
 */
enum MsfemStatus msfem_problem_slab_benchmark(size_t cells_per_mm, struct MsfemProblem **out);

/**
 * # Safety
 * `problem` must be null or a handle from this library not yet freed.
 */
void msfem_problem_free(struct MsfemProblem *problem);

/**
 * Number of mesh triangles of the problem.
 *
 * # Safety
 * `problem` must be a live handle; `out` must be writable.
 */
enum MsfemStatus msfem_problem_n_triangles(const struct MsfemProblem *problem, size_t *out);

/**
 * Solves, equilibrates and evaluates the error indicators.
 *
 * # Safety
 * `problem` must be a live handle; `out` must be writable.
 */
enum MsfemStatus msfem_solve(const struct MsfemProblem *problem, struct MsfemResult **out);

/**
 * # Safety
 * `result` must be null or a handle from this library not yet freed.
 */
void msfem_result_free(struct MsfemResult *result);

/**
 * Time-averaged loss of one sheet over the modelled cross-section (W).
 *
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum MsfemStatus msfem_result_losses(const struct MsfemResult *result, double *out);

/**
 * Total error estimate `η`.
 *
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum MsfemStatus msfem_result_eta(const struct MsfemResult *result, double *out);

/**
 * Largest relative constraint residual of the two equilibration problems.
 *
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum MsfemStatus msfem_result_residual(const struct MsfemResult *result, double *out);

/**
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum MsfemStatus msfem_result_n_dofs(const struct MsfemResult *result, size_t *out);

/**
 * Copies `η²_T` for every triangle (zero off the conductor) into `buf`.
 * `len` must be at least the triangle count; `written` (may be null)
 * receives the count either way.
 *
 * # Safety
 * `result` must be a live handle; `buf` must hold `len` doubles.
 */
enum MsfemStatus msfem_result_indicators(const struct MsfemResult *result,
                                         double *buf,
                                         size_t len,
                                         size_t *written);

/**
 * Loss per unit area of an infinite sheet (W/m²), see the library's
 * `reference::slab_losses`.
 *
 * # Safety
 * `out` must be writable.
 */
enum MsfemStatus msfem_slab_losses(double d_fe,
                                   double sigma,
                                   double mu,
                                   double frequency,
                                   double h_surface,
                                   double *out);

/**
 * Thickness integrals weighted by `kappa_fe` in the sheet and `kappa_0` in
 * the insulation.
 *
 * # Safety
 * `out` must be writable.
 */
enum MsfemStatus msfem_coefficient_table(double kappa_fe,
                                         double kappa_0,
                                         double d_fe,
                                         double d_0,
                                         struct MsfemCoefficientTable *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSFEM_EDDY_H */
