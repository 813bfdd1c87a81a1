#ifndef ELICIT_H
#define ELICIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ElicitStatus {
  ELICIT_STATUS_OK = 0,
  ELICIT_STATUS_INVALID_ARGUMENT = 1,
  ELICIT_STATUS_SINGULAR = 2,
  ELICIT_STATUS_CONVERGENCE = 3,
  ELICIT_STATUS_UNSUPPORTED = 4,
  ELICIT_STATUS_INFEASIBLE = 5,
  ELICIT_STATUS_INITIALIZATION = 6,
  ELICIT_STATUS_IO = 7,
  ELICIT_STATUS_NULL_POINTER = 8,
  ELICIT_STATUS_PANIC = 9,
} ElicitStatus;

/**
 * A prior, channel and answered questions.
 */
typedef struct ElicitBelief ElicitBelief;

/**
 * A noise channel.
 */
typedef struct ElicitChannel ElicitChannel;

/**
 * Posterior draws.
 */
typedef struct ElicitSamples ElicitSamples;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty if none. Valid
 * until the next failing call on the same thread.
 */
const char *elicit_last_error_message(void);

/**
 * Symmetric channel `alpha I + (1 - alpha)/m ee'`.
 *
 * # Safety
 * `out_channel` must be a valid pointer to writable storage for a handle.
 */
enum ElicitStatus elicit_channel_symmetric(size_t m,
                                           double alpha,
                                           struct ElicitChannel **out_channel);

/**
 * Channel from a row-major `m x m` row-stochastic matrix.
 *
 * # Safety
 * `matrix` must point to `m * m` doubles and `out_channel` to writable storage.
 */
enum ElicitStatus elicit_channel_from_matrix(size_t m,
                                             const double *matrix,
                                             struct ElicitChannel **out_channel);

/**
 * # Safety
 * `channel` must be null or a handle from this library not yet freed.
 */
void elicit_channel_free(struct ElicitChannel *channel);

/**
 * # Safety
 * `channel` must be a live handle and `out_m` writable.
 */
enum ElicitStatus elicit_channel_m(const struct ElicitChannel *channel, size_t *out_m);

/**
 * Capacity in bits and the capacity-achieving distribution.
 *
 * # Safety
 * `out_u` must hold `m` doubles; the other pointers must be valid.
 */
enum ElicitStatus elicit_channel_capacity(const struct ElicitChannel *channel,
                                          double tol,
                                          double *out_capacity_bits,
                                          double *out_u);

/**
 * `phi(u; P)` in bits for a distribution `u` of length `m`.
 *
 * # Safety
 * `u` must point to `m` doubles and `out_bits` must be writable.
 */
enum ElicitStatus elicit_channel_equation(const struct ElicitChannel *channel,
                                          const double *u,
                                          double *out_bits);

/**
 * Belief with an isotropic Gaussian prior `N(0, variance I_d)`; the channel
 * is copied.
 *
 * # Safety
 * `channel` must be a live handle and `out_belief` writable.
 */
enum ElicitStatus elicit_belief_new_isotropic(size_t d,
                                              double variance,
                                              const struct ElicitChannel *channel,
                                              struct ElicitBelief **out_belief);

/**
 * # Safety
 * `belief` must be null or a handle from this library not yet freed.
 */
void elicit_belief_free(struct ElicitBelief *belief);

/**
 * Records signal `signal` (0-based) for the question whose `m` alternatives
 * are the rows of the row-major `m x d` array `features`. `predictive` is
 * the current estimate of the answer distribution, of length `m`, formed
 * from `sample_count` draws (0 if it is exact).
 *
 * # Safety
 * `features` must hold `m * d` doubles and `predictive` `m` doubles, where
 * `d` is the belief dimension and `m` the channel size.
 */
enum ElicitStatus elicit_belief_update(struct ElicitBelief *belief,
                                       const double *features,
                                       size_t signal,
                                       const double *predictive,
                                       size_t sample_count);

/**
 * # Safety
 * `belief` must be a live handle and `out_steps` writable.
 */
enum ElicitStatus elicit_belief_steps(const struct ElicitBelief *belief, size_t *out_steps);

/**
 * Draws `count` posterior samples by hit-and-run.
 *
 * # Safety
 * `belief` must be a live handle and `out_samples` writable.
 */
enum ElicitStatus elicit_belief_sample(const struct ElicitBelief *belief,
                                       size_t count,
                                       size_t burn_in,
                                       size_t thinning,
                                       uint64_t seed,
                                       struct ElicitSamples **out_samples);

/**
 * Entropy estimate of the belief in bits with its standard error.
 *
 * # Safety
 * Handles must be live and outputs writable.
 */
enum ElicitStatus elicit_entropy_estimate(const struct ElicitBelief *belief,
                                          const struct ElicitSamples *samples,
                                          double *out_bits,
                                          double *out_se);

/**
 * # Safety
 * `samples` must be null or a handle from this library not yet freed.
 */
void elicit_samples_free(struct ElicitSamples *samples);

/**
 * Number of draws and their dimension.
 *
 * # Safety
 * `samples` must be a live handle and outputs writable.
 */
enum ElicitStatus elicit_samples_shape(const struct ElicitSamples *samples,
                                       size_t *out_count,
                                       size_t *out_dim);

/**
 * Copies the draws row-major into `buffer`, which holds `capacity` doubles.
 *
 * # Safety
 * `buffer` must be writable for `capacity` doubles.
 */
enum ElicitStatus elicit_samples_copy(const struct ElicitSamples *samples,
                                      double *buffer,
                                      size_t capacity);

/**
 * Fractions of draws choosing each of the `m` alternatives given as the
 * rows of the row-major `m x d` array `features`.
 *
 * # Safety
 * `features` must hold `m * d` doubles with `d` the draw dimension, and
 * `out_u` must be writable for `m` doubles.
 */
enum ElicitStatus elicit_predictive(const struct ElicitSamples *samples,
                                    const double *features,
                                    size_t m,
                                    double *out_u);

/**
 * Library version as a static NUL-terminated string.
 */
const char *elicit_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ELICIT_H */
