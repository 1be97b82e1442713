/* C interface of the lrsqn limited-memory quasi-Newton library. */

#pragma once

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum LrsqnStatus {
  LrsqnStatus_Ok = 0,
  /**
   * Generic failure; details via lrsqn_last_error_message.
   */
  LrsqnStatus_Failure = 1,
  /**
   * The optimizer stopped at its iteration cap.
   */
  LrsqnStatus_MaxIterations = 2,
  /**
   * The optimal reduction window splits the shift run.
   */
  LrsqnStatus_StructuralSplit = 3,
  LrsqnStatus_InvalidArgument = 4,
  LrsqnStatus_NullPointer = 5,
  /**
   * A Stein measure was applied to a non-positive-definite matrix.
   */
  LrsqnStatus_PositivityViolation = 6,
  /**
   * The objective or gradient callback failed or produced non-finite
   * values.
   */
  LrsqnStatus_ObjectiveFailure = 7,
  LrsqnStatus_Io = 8,
} LrsqnStatus;

/**
 * Dissimilarity measure selector for reductions.
 */
typedef enum LrsqnMeasure {
  LrsqnMeasure_L2 = 0,
  LrsqnMeasure_Frobenius = 1,
  LrsqnMeasure_Stein = 2,
  LrsqnMeasure_InverseStein = 3,
  LrsqnMeasure_SymmetrizedStein = 4,
} LrsqnMeasure;

/**
 * Opaque shift-plus-low-rank matrix handle.
 */
typedef struct LrsqnMatrix LrsqnMatrix;

/**
 * Trust-region optimizer configuration (plain data, passed by pointer).
 */
typedef struct LrsqnConfig {
  /**
   * Number of stored eigenpairs at the start of an iteration.
   */
  size_t memory;
  enum LrsqnMeasure measure;
  double eta1;
  double eta2;
  double gamma1;
  double gamma2;
  /**
   * Relative boundary tolerance of the subproblem solver.
   */
  double eps;
  /**
   * Update skip threshold on s^T y.
   */
  double eps_curv;
  /**
   * Pivot drop threshold of the eigendecomposition refresh.
   */
  double nu;
  double initial_radius;
  size_t max_iter;
  double grad_tol_abs;
  double grad_tol_rel_grad;
  double grad_tol_rel_f;
} LrsqnConfig;

/**
 * Objective value callback: write f(x) to `out`, return 0 on success.
 */
typedef int32_t (*LrsqnEvalFn)(const double *x, size_t n, double *out, void *user);

/**
 * Gradient callback: write the n entries of grad f(x) to `out`, return 0
 * on success.
 */
typedef int32_t (*LrsqnGradFn)(const double *x, size_t n, double *out, void *user);

/**
 * Summary of a finished optimization run.
 */
typedef struct LrsqnRunStats {
  size_t iterations;
  double f;
  double gnorm;
} LrsqnRunStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `cap`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes, or be null (then only the
 * required length is returned).
 */
size_t lrsqn_last_error_message(char *buf, size_t cap);

/**
 * New rank-zero matrix `alpha * I` of dimension n. Free with
 * [`lrsqn_matrix_free`]. Returns null when n is zero.
 */
struct LrsqnMatrix *lrsqn_matrix_shifted_identity(size_t n, double alpha);

/**
 * Deep copy. Returns null on null input.
 *
 * # Safety
 * `matrix` must be a live handle from this library or null.
 */
struct LrsqnMatrix *lrsqn_matrix_clone(const struct LrsqnMatrix *matrix);

/**
 * Release a handle. Null is a no-op.
 *
 * # Safety
 * `matrix` must be a handle returned by this library, not yet freed.
 */
void lrsqn_matrix_free(struct LrsqnMatrix *matrix);

/**
 * Matrix dimension n, or 0 for a null handle.
 *
 * # Safety
 * `matrix` must be a live handle or null.
 */
size_t lrsqn_matrix_dim(const struct LrsqnMatrix *matrix);

/**
 * Number of stored eigenpairs, or 0 for a null handle.
 *
 * # Safety
 * `matrix` must be a live handle or null.
 */
size_t lrsqn_matrix_rank(const struct LrsqnMatrix *matrix);

/**
 * The shift eigenvalue alpha (NaN for a null handle).
 *
 * # Safety
 * `matrix` must be a live handle or null.
 */
double lrsqn_matrix_shift(const struct LrsqnMatrix *matrix);

/**
 * y = B x for a vector of length `len` (= matrix dimension).
 *
 * # Safety
 * `x` and `y` must point to `len` readable/writable doubles; `matrix` must
 * be a live handle.
 */
enum LrsqnStatus lrsqn_matrix_matvec(const struct LrsqnMatrix *matrix,
                                     const double *x,
                                     double *y,
                                     size_t len);

/**
 * Parse a matrix from the text eigenpair format.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable. On Ok the
 * caller owns the returned handle.
 */
enum LrsqnStatus lrsqn_matrix_read_text(const char *path, struct LrsqnMatrix **out);

/**
 * Write a matrix in the text eigenpair format.
 *
 * # Safety
 * `matrix` must be a live handle; `path` a NUL-terminated string.
 */
enum LrsqnStatus lrsqn_matrix_write_text(const struct LrsqnMatrix *matrix, const char *path);

/**
 * Nearest matrix with at most `target_rank` stored eigenpairs under
 * `measure`. On Ok, `*out` owns the reduced matrix and `*loss` (when
 * non-null) receives the block objective value.
 *
 * # Safety
 * `matrix` must be a live handle, `out` writable; `loss` may be null.
 */
enum LrsqnStatus lrsqn_matrix_reduce(const struct LrsqnMatrix *matrix,
                                     size_t target_rank,
                                     enum LrsqnMeasure measure,
                                     struct LrsqnMatrix **out,
                                     double *loss);

/**
 * The library's default optimizer configuration (Frobenius measure,
 * memory 5).
 */
struct LrsqnConfig lrsqn_config_default(void);

/**
 * Minimize an objective supplied through callbacks. `x` holds the starting
 * point on entry and the final iterate on exit. `stats`, when non-null,
 * receives the run summary. Returns Ok on convergence, MaxIterations when
 * the cap was reached (x still holds the best iterate), and an error code
 * otherwise.
 *
 * # Safety
 * `x` must point to `n` read/writable doubles; `config` must be a valid
 * configuration; the callbacks must be safe to call with any x of length n
 * and must not unwind across the boundary.
 */
enum LrsqnStatus lrsqn_minimize(LrsqnEvalFn eval,
                                LrsqnGradFn grad,
                                void *user,
                                double *x,
                                size_t n,
                                const struct LrsqnConfig *config,
                                struct LrsqnRunStats *stats);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
