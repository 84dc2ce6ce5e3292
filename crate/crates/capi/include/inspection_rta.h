#ifndef INSPECTION_RTA_H
#define INSPECTION_RTA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible entry point.
 */
typedef enum RtaStatus {
  RtaOk = 0,
  RtaNullPointer = 1,
  RtaInvalidConfig = 2,
  RtaInvalidAction = 3,
  RtaEpisodeFinished = 4,
  RtaRuntimeError = 5,
} RtaStatus;

/**
 * Termination cause, `RtaRunning` while the episode is live.
 */
typedef enum RtaTermination {
  RtaRunning = 0,
  RtaSuccess = 1,
  RtaCrash = 2,
  RtaOutOfBounds = 3,
  RtaTimeout = 4,
  RtaPowerDepleted = 5,
} RtaTermination;

/**
 * Opaque episode handle.
 */
typedef struct RtaEpisode RtaEpisode;

/**
 * Result of one outer (policy-rate) step.
 */
typedef struct RtaStepInfo {
  double reward;
  bool done;
  enum RtaTermination termination;
  /**
   * Simulated time after the step, s.
   */
  double t;
  /**
   * Cumulative inspected point weight in [0, 1].
   */
  double inspected_weight;
} RtaStepInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates an episode. `config_toml_path` may be null for defaults; the
 * seed and RTA switch override whatever the file says. On success
 * writes the new handle through `out`.
 *
 * # Safety
 * `out` must be a valid pointer; `config_toml_path`, when non-null,
 * must be a NUL-terminated path string.
 */
enum RtaStatus rta_episode_create(const char *config_toml_path,
                                  uint64_t seed,
                                  bool rta_enabled,
                                  struct RtaEpisode **out);

/**
 * Re-initializes the episode with a new seed, keeping the
 * configuration it was created with.
 *
 * # Safety
 * `ep` must be a live handle from `rta_episode_create`.
 */
enum RtaStatus rta_episode_reset(struct RtaEpisode *ep, uint64_t seed);

/**
 * Number of elements in the observation vector.
 */
size_t rta_observation_len(void);

/**
 * Writes the current normalized observation into `out_obs`
 * (`rta_observation_len()` doubles).
 *
 * # Safety
 * `ep` must be a live handle; `out_obs` must point at at least 26
 * doubles.
 */
enum RtaStatus rta_episode_observe(const struct RtaEpisode *ep, double *out_obs);

/**
 * Advances one outer step with the desired control `action`
 * (`[Fx, Fy, Fz, tau_x, tau_y, tau_z]`, N and N·m). `out_info` may be
 * null when the caller does not need the step summary.
 *
 * # Safety
 * `ep` must be a live handle; `action` must point at 6 doubles.
 */
enum RtaStatus rta_episode_step(struct RtaEpisode *ep,
                                const double *action,
                                struct RtaStepInfo *out_info);

/**
 * Frees a handle. Null is a no-op; a handle must not be used after.
 *
 * # Safety
 * `ep` must be null or a live handle from `rta_episode_create`.
 */
void rta_episode_free(struct RtaEpisode *ep);

/**
 * Static description of a status code.
 */
const char *rta_status_str(enum RtaStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INSPECTION_RTA_H */
