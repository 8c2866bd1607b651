#ifndef EPSMECH_H
#define EPSMECH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EpsmechStatus {
  EPSMECH_STATUS_OK = 0,
  EPSMECH_STATUS_NULL_POINTER = 1,
  EPSMECH_STATUS_INVALID_UTF8 = 2,
  EPSMECH_STATUS_DOMAIN = 3,
  EPSMECH_STATUS_SINGULARITY = 4,
  EPSMECH_STATUS_CONSTRUCTION = 5,
  EPSMECH_STATUS_IO = 6,
  EPSMECH_STATUS_CONFIG = 7,
  EPSMECH_STATUS_PANIC = 8,
} EpsmechStatus;

/**
 * Opaque value distribution.
 */
typedef struct EpsmechDist EpsmechDist;

/**
 * Opaque selling mechanism.
 */
typedef struct EpsmechMechanism EpsmechMechanism;

/**
 * Output of [`epsmech_verify`].
 */
typedef struct EpsmechVerification {
  double min_ir_slack;
  double min_ic_slack;
  double worst_value;
  double worst_report;
  size_t grid_size;
  bool passed;
} EpsmechVerification;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL if none.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *epsmech_last_error(void);

/**
 * Parses a distribution from its JSON description.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum EpsmechStatus epsmech_dist_from_json(const char *json, struct EpsmechDist **out);

/**
 * Uniform distribution on `[0, v_bar]`.
 *
 * # Safety
 * `out` must be a writable pointer.
 */
enum EpsmechStatus epsmech_dist_uniform(double v_bar, struct EpsmechDist **out);

/**
 * # Safety
 * `dist` must be NULL or a handle from this library that was not yet freed.
 */
void epsmech_dist_free(struct EpsmechDist *dist);

/**
 * Monopoly price and revenue.
 *
 * # Safety
 * `dist` must be a live handle; `price` and `revenue` writable pointers.
 */
enum EpsmechStatus epsmech_dist_optimal_price(const struct EpsmechDist *dist,
                                              double *price,
                                              double *revenue);

/**
 * Survival function `1 − F(v)`.
 *
 * # Safety
 * `dist` must be a live handle and `out` a writable pointer.
 */
enum EpsmechStatus epsmech_dist_sf(const struct EpsmechDist *dist, double v, double *out);

/**
 * Best deterministic floor mechanism at `eps`.
 *
 * # Safety
 * `dist` must be a live handle; the three outputs writable pointers.
 */
enum EpsmechStatus epsmech_det_optimum(const struct EpsmechDist *dist,
                                       double eps,
                                       double *reserve,
                                       double *value,
                                       double *gain);

/**
 * Builds the perturbed delayed mechanism. A nonpositive `mu` selects it
 * automatically from the distribution's envelope exponent.
 *
 * # Safety
 * `dist` must be a live handle and `out` a writable pointer.
 */
enum EpsmechStatus epsmech_delayed_build(const struct EpsmechDist *dist,
                                         double eps,
                                         double mu,
                                         struct EpsmechMechanism **out);

/**
 * Parses a mechanism from JSON.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum EpsmechStatus epsmech_mech_from_json(const char *json, struct EpsmechMechanism **out);

/**
 * # Safety
 * `mech` must be NULL or a handle from this library that was not yet freed.
 */
void epsmech_mech_free(struct EpsmechMechanism *mech);

/**
 * Allocation probability and payment at report `v`.
 *
 * # Safety
 * `mech` must be a live handle; `alloc` and `transfer` writable pointers.
 */
enum EpsmechStatus epsmech_mech_eval(const struct EpsmechMechanism *mech,
                                     double v,
                                     double *alloc,
                                     double *transfer);

/**
 * Serializes a mechanism; free the result with [`epsmech_string_free`].
 *
 * # Safety
 * `mech` must be a live handle and `out` a writable pointer.
 */
enum EpsmechStatus epsmech_mech_to_json(const struct EpsmechMechanism *mech, char **out);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library that was not yet freed.
 */
void epsmech_string_free(char *s);

/**
 * Expected revenue of `mech` under `dist`.
 *
 * # Safety
 * Both handles must be live and `out` a writable pointer.
 */
enum EpsmechStatus epsmech_expected_revenue(const struct EpsmechMechanism *mech,
                                            const struct EpsmechDist *dist,
                                            double *out);

/**
 * Checks IR and ε-IC on a grid of `grid_size` values.
 *
 * # Safety
 * Both handles must be live and `out` a writable pointer.
 */
enum EpsmechStatus epsmech_verify(const struct EpsmechMechanism *mech,
                                  const struct EpsmechDist *dist,
                                  double eps,
                                  size_t grid_size,
                                  struct EpsmechVerification *out);

/**
 * Dual upper bound on the optimal ε-IC revenue. A nonpositive `beta` is
 * optimized around the envelope-based default.
 *
 * # Safety
 * `dist` must be a live handle and `out` a writable pointer.
 */
enum EpsmechStatus epsmech_dual_bound(const struct EpsmechDist *dist,
                                      double eps,
                                      double beta,
                                      double *out);

/**
 * `Γ(t)`; NaN for negative or non-finite `t`.
 */
double epsmech_gamma(double t);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* EPSMECH_H */
