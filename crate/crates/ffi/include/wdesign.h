#ifndef WDESIGN_H
#define WDESIGN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WdCriterion {
  WD_CRITERION_D = 0,
  WD_CRITERION_A = 1,
  WD_CRITERION_E = 2,
} WdCriterion;

typedef enum WdNuisance {
  WD_NUISANCE_NONE = 0,
  WD_NUISANCE_INTERCEPT = 1,
  /**
   * Consecutive blocks; sizes are passed separately.
   */
  WD_NUISANCE_BLOCKS = 2,
} WdNuisance;

/**
 * Result codes.
 */
typedef enum WdStatus {
  WD_STATUS_OK = 0,
  WD_STATUS_NULL_POINTER = 1,
  WD_STATUS_INVALID_ARGUMENT = 2,
  WD_STATUS_SINGULAR = 3,
  WD_STATUS_INFEASIBLE = 4,
  WD_STATUS_OUTSIDE_ESTIMATION_SPACE = 5,
  WD_STATUS_NUMERICAL_FAILURE = 6,
  WD_STATUS_PANIC = 7,
} WdStatus;

/**
 * An exact design with its analysed information matrix.
 */
typedef struct WdDesign WdDesign;

typedef struct WdSpace WdSpace;

typedef struct WdSystem WdSystem;

typedef struct WdWeightMatrix WdWeightMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *wd_version(void);

/**
 * Message for the last failing call on this thread; empty if none.
 */
const char *wd_last_error_message(void);

/**
 * Creates a design from `n` 0-based treatment labels.
 *
 * # Safety
 * `assignment` must point to `n` values. For `WdNuisance::Blocks`,
 * `block_sizes` must point to `n_blocks` values.
 */
enum WdStatus wd_design_new(size_t v,
                            const size_t *assignment,
                            size_t n,
                            enum WdNuisance nuisance,
                            const size_t *block_sizes,
                            size_t n_blocks,
                            struct WdDesign **out);

/**
 * # Safety
 * `design` must be null or a handle from [`wd_design_new`] not yet freed.
 */
void wd_design_free(struct WdDesign *design);

/**
 * Writes the `v x v` information matrix, row-major, into `out[0..len]`.
 *
 * # Safety
 * `design` must be a live handle and `out` must hold `len` values.
 */
enum WdStatus wd_design_information_matrix(const struct WdDesign *design, double *out, size_t len);

/**
 * Numerical rank of the information matrix.
 *
 * # Safety
 * `design` must be a live handle; `out` must be writable.
 */
enum WdStatus wd_design_rank(const struct WdDesign *design, size_t *out);

/**
 * Treatment contrasts: the orthogonal complement of the all-ones vector.
 *
 * # Safety
 * `out` must be writable.
 */
enum WdStatus wd_space_contrasts(size_t v, struct WdSpace **out);

/**
 * The whole of `R^v`.
 *
 * # Safety
 * `out` must be writable.
 */
enum WdStatus wd_space_full(size_t v, struct WdSpace **out);

/**
 * # Safety
 * `space` must be null or a live handle.
 */
void wd_space_free(struct WdSpace *space);

/**
 * A system of `s` functions given by the `v x s` row-major coefficient
 * matrix `q`, with optional positive weights (null means all 1).
 *
 * # Safety
 * `q` must hold `v * s` values; `weights` must be null or hold `s` values.
 */
enum WdStatus wd_system_new(size_t v,
                            size_t s,
                            const double *q,
                            const double *weights,
                            struct WdSystem **out);

/**
 * # Safety
 * `system` must be null or a live handle.
 */
void wd_system_free(struct WdSystem *system);

/**
 * Validates a `v x v` row-major nonnegative definite `w` whose column space
 * lies in `space`.
 *
 * # Safety
 * `w` must hold `v * v` values; `space` must be a live handle.
 */
enum WdStatus wd_weight_matrix_new(size_t v,
                                   const double *w,
                                   const struct WdSpace *space,
                                   struct WdWeightMatrix **out);

/**
 * The weight matrix implied by a system.
 *
 * # Safety
 * `system` and `space` must be live handles; `out` must be writable.
 */
enum WdStatus wd_weight_matrix_from_system(const struct WdSystem *system,
                                           const struct WdSpace *space,
                                           struct WdWeightMatrix **out);

/**
 * Writes the `v x v` weight matrix, row-major.
 *
 * # Safety
 * `w` must be a live handle and `out` must hold `len` values.
 */
enum WdStatus wd_weight_matrix_values(const struct WdWeightMatrix *w, double *out, size_t len);

/**
 * # Safety
 * `w` must be null or a live handle.
 */
void wd_weight_matrix_free(struct WdWeightMatrix *w);

/**
 * Weight of the function with coefficients `q[0..v]`. When `q` is outside
 * the column space of `W`, `*in_span` is false and `*weight` is 0.
 *
 * # Safety
 * `w` must be a live handle, `q` must hold `v` values, and both outputs
 * must be writable.
 */
enum WdStatus wd_weight_of(const struct WdWeightMatrix *w,
                           const double *q,
                           size_t v,
                           double *weight,
                           bool *in_span);

/**
 * Criterion value of the system's information matrix, on its positive
 * spectrum.
 *
 * # Safety
 * `design` and `system` must be live handles; `out` must be writable.
 */
enum WdStatus wd_criterion_system(const struct WdDesign *design,
                                  const struct WdSystem *system,
                                  enum WdCriterion criterion,
                                  double *out);

/**
 * Criterion value of the weighted information matrix.
 *
 * # Safety
 * `design` and `w` must be live handles; `out` must be writable.
 */
enum WdStatus wd_criterion_weighted(const struct WdDesign *design,
                                    const struct WdWeightMatrix *w,
                                    enum WdCriterion criterion,
                                    double *out);

/**
 * Compares the positive spectra of the system's information matrix and of
 * the weighted information matrix of its implied weight matrix.
 *
 * # Safety
 * All handles must be live; both outputs must be writable.
 */
enum WdStatus wd_certify_system_spectra(const struct WdDesign *design,
                                        const struct WdSystem *system,
                                        const struct WdSpace *space,
                                        double *max_deviation,
                                        bool *passed);

/**
 * Number of treatments of a design.
 *
 * # Safety
 * `design` must be null or a live handle.
 */
size_t wd_design_v(const struct WdDesign *design);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WDESIGN_H */
