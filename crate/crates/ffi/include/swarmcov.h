#ifndef SWARMCOV_H
#define SWARMCOV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum SwarmcovStatus {
  SWARMCOV_STATUS_OK = 0,
  SWARMCOV_STATUS_NULL_POINTER = 1,
  SWARMCOV_STATUS_INVALID_ARGUMENT = 2,
  SWARMCOV_STATUS_INVALID_POLYGON = 3,
  SWARMCOV_STATUS_LENGTH_MISMATCH = 4,
  SWARMCOV_STATUS_IO = 5,
  SWARMCOV_STATUS_CHECKPOINT = 6,
  SWARMCOV_STATUS_NON_FINITE = 7,
  SWARMCOV_STATUS_PANIC = 8,
} SwarmcovStatus;

typedef struct SwarmcovEnv SwarmcovEnv;

typedef struct SwarmcovPolicy SwarmcovPolicy;

typedef struct SwarmcovPolygon SwarmcovPolygon;

// Environment settings; obtain defaults from `swarmcov_env_params_default`.
typedef struct SwarmcovEnvParams {
  size_t n_agents;
  // Episode length in seconds; a multiple of `dt`.
  double horizon;
  double v_max;
  double a_max;
  double dt;
  // Damping of the classical controller.
  double damping;
  uint64_t seed;
} SwarmcovEnvParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *swarmcov_version(void);

// Bytes needed for the last error message including the terminating NUL;
// 0 if no error has been recorded on this thread.
size_t swarmcov_last_error_length(void);

// Copies the last error message (truncated to fit, always NUL-terminated)
// into `buf` and returns the number of bytes written excluding the NUL.
size_t swarmcov_last_error_message(char *buf, size_t len);

// Builds a polygon from `n_vertices` interleaved `(x, y)` pairs.
enum SwarmcovStatus swarmcov_polygon_new(const double *xy,
                                         size_t n_vertices,
                                         struct SwarmcovPolygon **out);

// Regular polygon with `sides` vertices and the given area.
enum SwarmcovStatus swarmcov_polygon_regular(size_t sides,
                                             double area,
                                             struct SwarmcovPolygon **out);

// Reads a JSON list of `[x, y]` vertices.
enum SwarmcovStatus swarmcov_polygon_load(const char *path, struct SwarmcovPolygon **out);

enum SwarmcovStatus swarmcov_polygon_area(const struct SwarmcovPolygon *poly, double *out);

// Signed distance of `(x, y)` to the boundary, negative inside.
enum SwarmcovStatus swarmcov_polygon_signed_distance(const struct SwarmcovPolygon *poly,
                                                     double x,
                                                     double y,
                                                     double *out);

void swarmcov_polygon_free(struct SwarmcovPolygon *poly);

// Fills `out` with the default settings for `n_agents` agents.
enum SwarmcovStatus swarmcov_env_params_default(size_t n_agents, struct SwarmcovEnvParams *out);

// Creates an environment on a copy of `poly`, reset with `params.seed`.
enum SwarmcovStatus swarmcov_env_new(const struct SwarmcovPolygon *poly,
                                     const struct SwarmcovEnvParams *params,
                                     struct SwarmcovEnv **out);

// Starts a new episode from the line placement drawn with `seed`.
enum SwarmcovStatus swarmcov_env_reset(struct SwarmcovEnv *env, uint64_t seed);

// Restarts the episode at rest from `n_agents` interleaved positions.
enum SwarmcovStatus swarmcov_env_reset_to(struct SwarmcovEnv *env, const double *xy, size_t len);

enum SwarmcovStatus swarmcov_env_num_agents(const struct SwarmcovEnv *env, size_t *out);

// Width of one row of `swarmcov_env_state`.
size_t swarmcov_state_dim(void);

// Copies the `n_agents x swarmcov_state_dim()` state matrix, row-major.
enum SwarmcovStatus swarmcov_env_state(const struct SwarmcovEnv *env, double *out, size_t len);

// Copies the `n_agents` interleaved positions.
enum SwarmcovStatus swarmcov_env_positions(const struct SwarmcovEnv *env, double *out, size_t len);

enum SwarmcovStatus swarmcov_env_total_potential(const struct SwarmcovEnv *env, double *out);

// Elapsed episode time in seconds.
enum SwarmcovStatus swarmcov_env_time(const struct SwarmcovEnv *env, double *out);

// Applies `2 * n_agents` interleaved accelerations. Per-agent rewards go to
// `rewards` (length `n_agents`) when it is non-null; `done` (nullable) is
// set to 1 once the horizon is reached.
enum SwarmcovStatus swarmcov_env_step(struct SwarmcovEnv *env,
                                      const double *actions,
                                      size_t actions_len,
                                      double *rewards,
                                      size_t rewards_len,
                                      int32_t *done);

// Classical controller accelerations for the current state.
enum SwarmcovStatus swarmcov_env_classical_actions(const struct SwarmcovEnv *env,
                                                   double *out,
                                                   size_t len);

// Loads the actor of a checkpoint; it runs on any number of agents.
enum SwarmcovStatus swarmcov_policy_load(const char *path, struct SwarmcovPolicy **out);

// Mean actions of the policy, clamped to `a_max`.
enum SwarmcovStatus swarmcov_policy_actions(struct SwarmcovPolicy *policy,
                                            const struct SwarmcovEnv *env,
                                            double *out,
                                            size_t len);

void swarmcov_policy_free(struct SwarmcovPolicy *policy);

void swarmcov_env_free(struct SwarmcovEnv *env);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SWARMCOV_H */
