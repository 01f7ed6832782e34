#ifndef TEMPERED_ZIGZAG_H
#define TEMPERED_ZIGZAG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Mode codes written by [`tzz_skeleton_event`].
 */
#define TZZ_MODE_TEMPERING 0

#define TZZ_MODE_TARGET 1

#define TZZ_MODE_UNTEMPERED 2

/**
 * Result codes shared by every function.
 */
typedef enum TzzStatus {
  TZZ_STATUS_OK = 0,
  TZZ_STATUS_NULL_POINTER = 1,
  TZZ_STATUS_INVALID_UTF8 = 2,
  TZZ_STATUS_INVALID_CONFIG = 3,
  TZZ_STATUS_BOUND_VIOLATION = 4,
  TZZ_STATUS_NON_FINITE = 5,
  TZZ_STATUS_INVALID_ARGUMENT = 6,
  /**
   * Skeleton or summary requested before a successful run.
   */
  TZZ_STATUS_NOT_RUN = 7,
  TZZ_STATUS_IO = 8,
  TZZ_STATUS_INTERNAL = 99,
} TzzStatus;

/**
 * Opaque sampler handle.
 */
typedef struct TzzSampler TzzSampler;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *tzz_last_error_message(void);

/**
 * Parses and validates a JSON run config and builds its model.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TzzStatus tzz_sampler_from_json(const char *json, struct TzzSampler **out);

/**
 * Overrides the config seed before running.
 *
 * # Safety
 * `sampler` must come from [`tzz_sampler_from_json`].
 */
enum TzzStatus tzz_sampler_set_seed(struct TzzSampler *sampler, uint64_t seed);

/**
 * Runs replicate `replicate` of the configured chain, replacing any
 * previous result held by the handle.
 *
 * # Safety
 * `sampler` must come from [`tzz_sampler_from_json`].
 */
enum TzzStatus tzz_sampler_run(struct TzzSampler *sampler, size_t replicate);

/**
 * Number of records in the last skeleton, initial and final included.
 *
 * # Safety
 * `sampler` must come from [`tzz_sampler_from_json`]; `out` must be valid.
 */
enum TzzStatus tzz_skeleton_len(const struct TzzSampler *sampler, size_t *out);

/**
 * Position dimension of the model.
 *
 * # Safety
 * `sampler` must come from [`tzz_sampler_from_json`]; `out` must be valid.
 */
enum TzzStatus tzz_sampler_dim(const struct TzzSampler *sampler, size_t *out);

/**
 * Copies record `index` of the last skeleton: its time, mode code,
 * `beta` and position. `x` must hold `x_len` doubles, at least the
 * dimension.
 *
 * # Safety
 * All pointers must be valid; `x` must point to `x_len` writable doubles.
 */
enum TzzStatus tzz_skeleton_event(const struct TzzSampler *sampler,
                                  size_t index,
                                  double *t,
                                  int32_t *mode,
                                  double *beta,
                                  double *x,
                                  size_t x_len);

/**
 * Summary of the last run as a JSON string owned by the caller; release
 * it with [`tzz_string_free`].
 *
 * # Safety
 * `sampler` must come from [`tzz_sampler_from_json`]; `out` must be valid.
 */
enum TzzStatus tzz_summary_json(const struct TzzSampler *sampler, char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void tzz_string_free(char *s);

/**
 * Releases a sampler. Null is ignored.
 *
 * # Safety
 * `sampler` must come from [`tzz_sampler_from_json`] and not be freed twice.
 */
void tzz_sampler_free(struct TzzSampler *sampler);

/**
 * First event time of the polynomial rate `max(0, sum_k c_k s^k)` on
 * `[0, horizon)` for uniform draw `u`. Sets `found` to 0 when no event
 * occurs before the horizon.
 *
 * # Safety
 * `coeffs` must point to `n` doubles; `t` and `found` must be valid.
 */
enum TzzStatus tzz_first_event_poly(const double *coeffs,
                                    size_t n,
                                    double horizon,
                                    double u,
                                    double *t,
                                    int32_t *found);

/**
 * Importance weight `delta / (exp(delta) - 1)`.
 *
 * # Safety
 * `out` must be valid.
 */
enum TzzStatus tzz_is_weight(double delta, double *out);

/**
 * Rate of leaving the atom at `beta = 1`, `ratio (1 - alpha) / (2 alpha)`,
 * where `ratio` is the left limit of `kappa Z` at 1 over `kappa Z` at 0.
 *
 * # Safety
 * `out` must be valid.
 */
enum TzzStatus tzz_exit_rate(double alpha, double ratio, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TEMPERED_ZIGZAG_H */
