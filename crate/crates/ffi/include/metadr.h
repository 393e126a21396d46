#ifndef METADR_H
#define METADR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MdrStatus {
  MDR_STATUS_OK = 0,
  MDR_STATUS_NULL_POINTER = 1,
  MDR_STATUS_INVALID_ARGUMENT = 2,
  MDR_STATUS_SHAPE_MISMATCH = 3,
  MDR_STATUS_IO = 4,
  MDR_STATUS_BAD_CHECKPOINT = 5,
  MDR_STATUS_NUMERIC = 6,
  MDR_STATUS_PANIC = 7,
} MdrStatus;

typedef enum MdrPerson {
  MDR_PERSON_LINEAR = 0,
  MDR_PERSON_SINUSOIDAL = 1,
  MDR_PERSON_THRESHOLD_EXPONENTIAL = 2,
  MDR_PERSON_CURTAIL_AND_SHIFT = 3,
} MdrPerson;

typedef enum MdrResponse {
  MDR_RESPONSE_LINEAR = 0,
  MDR_RESPONSE_SINUSOIDAL = 1,
  MDR_RESPONSE_THRESHOLD_EXPONENTIAL = 2,
} MdrResponse;

/**
 * Opaque single-task environment handle.
 */
typedef struct MdrEnv MdrEnv;

/**
 * Opaque policy network handle.
 */
typedef struct MdrPolicy MdrPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf`, NUL-terminated
 * and truncated to `len` bytes. Returns the full message length including
 * the terminator, or 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t mdr_last_error_message(char *buf, size_t len);

void mdr_clear_error(void);

/**
 * Fresh Glorot-initialized network with a 256-unit trunk.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum MdrStatus mdr_policy_new_random(size_t obs_dim,
                                     size_t act_dim,
                                     uint64_t seed,
                                     struct MdrPolicy **out);

/**
 * Loads the parameters of a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum MdrStatus mdr_policy_load(const char *path, struct MdrPolicy **out);

/**
 * Writes the parameters as a checkpoint tagged with `meta_iteration`.
 *
 * # Safety
 * `policy` must be a live handle; `path` a NUL-terminated string.
 */
enum MdrStatus mdr_policy_save(const struct MdrPolicy *policy,
                               const char *path,
                               uint64_t meta_iteration);

/**
 * # Safety
 * `policy` must be null or a live handle.
 */
size_t mdr_policy_obs_dim(const struct MdrPolicy *policy);

/**
 * # Safety
 * `policy` must be null or a live handle.
 */
size_t mdr_policy_act_dim(const struct MdrPolicy *policy);

/**
 * Action mean and value estimate for one observation.
 *
 * # Safety
 * `obs` must hold `obs_len` values, `mean_out` room for `act_len`, and
 * `value_out` must be writable.
 */
enum MdrStatus mdr_policy_forward(const struct MdrPolicy *policy,
                                  const double *obs,
                                  size_t obs_len,
                                  double *mean_out,
                                  size_t act_len,
                                  double *value_out);

/**
 * # Safety
 * `policy` must be null or a handle not yet freed.
 */
void mdr_policy_free(struct MdrPolicy *policy);

/**
 * Environment for one task under the default configuration.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum MdrStatus mdr_env_new(enum MdrPerson person,
                           double multiplier,
                           uint64_t baseline_seed,
                           uint64_t price_seed,
                           struct MdrEnv **out);

/**
 * # Safety
 * `env` must be null or a live handle.
 */
size_t mdr_env_obs_dim(const struct MdrEnv *env);

/**
 * # Safety
 * `env` must be null or a live handle.
 */
size_t mdr_env_act_dim(const struct MdrEnv *env);

/**
 * # Safety
 * `env` must be a live handle and `obs_out` hold `obs_len` values.
 */
enum MdrStatus mdr_env_reset(struct MdrEnv *env, double *obs_out, size_t obs_len);

/**
 * Simulates one day. Points are clipped to the allowed range; the cost and
 * penalty flag outputs may be null.
 *
 * # Safety
 * `action` must hold `act_len` values, `obs_out` room for `obs_len`, and the
 * non-null scalar outputs must be writable.
 */
enum MdrStatus mdr_env_step(struct MdrEnv *env,
                            const double *action,
                            size_t act_len,
                            double *obs_out,
                            size_t obs_len,
                            double *reward_out,
                            double *cost_out,
                            bool *penalized_out);

/**
 * # Safety
 * `env` must be null or a handle not yet freed.
 */
void mdr_env_free(struct MdrEnv *env);

/**
 * `-ln(dᵀg) - lambda·[dᵀg < dhat_fraction·bᵀg]`.
 *
 * # Safety
 * The three arrays must hold `len` values; `penalized_out` may be null.
 */
enum MdrStatus mdr_reward(const double *demand,
                          const double *price,
                          const double *baseline,
                          size_t len,
                          double lambda,
                          double dhat_fraction,
                          double *reward_out,
                          bool *penalized_out);

/**
 * Closed-form occupant response clipped to `[d_min, d_max]`.
 *
 * # Safety
 * All arrays must hold `len` values.
 */
enum MdrStatus mdr_deterministic_response(enum MdrResponse kind,
                                          double multiplier,
                                          double threshold,
                                          const double *points,
                                          const double *baseline,
                                          const double *d_min,
                                          const double *d_max,
                                          size_t len,
                                          double *demand_out);

/**
 * Curtail-and-shift occupant: drops curtailable load in the `t_curtail`
 * highest-points hours and moves each hour's shiftable load to the cheapest
 * hour within `t_shift`.
 *
 * # Safety
 * All arrays must hold `len` values.
 */
enum MdrStatus mdr_curtail_shift_response(const double *fixed,
                                          const double *curtailable,
                                          const double *shiftable,
                                          const double *points,
                                          size_t len,
                                          size_t t_curtail,
                                          size_t t_shift,
                                          double *demand_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* METADR_H */
