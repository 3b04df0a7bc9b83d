#ifndef PLATOON_H
#define PLATOON_H

/* Generated by cbindgen from the platoon-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a fallible call.
 */
typedef enum {
  /**
   * The call succeeded and any out-pointer now holds a valid result.
   */
  PLATOON_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  PLATOON_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  PLATOON_STATUS_INVALID_UTF8 = 2,
  /**
   * A file's contents could not be parsed.
   */
  PLATOON_STATUS_PARSE = 3,
  /**
   * The scenario (or a requested change to it) failed validation.
   */
  PLATOON_STATUS_INVALID_SCENARIO = 4,
  /**
   * Reading or writing a file failed.
   */
  PLATOON_STATUS_IO = 5,
  /**
   * The requested signal name is not one of the recorded signals.
   */
  PLATOON_STATUS_UNKNOWN_SIGNAL = 6,
  /**
   * The provided buffer length does not match the required length.
   */
  PLATOON_STATUS_BUFFER_MISMATCH = 7,
  /**
   * A vehicle index was outside the platoon.
   */
  PLATOON_STATUS_OUT_OF_RANGE = 8,
  /**
   * The small-gain value is at or above one, so no certificate exists.
   */
  PLATOON_STATUS_NOT_STRING_STABLE = 9,
  /**
   * No diagonal scaling on the search grid was positive definite.
   */
  PLATOON_STATUS_CERTIFICATION_FAILED = 10,
} PlatoonStatus;

/**
 * Opaque experiment description: platoon size, gains, leader schedule,
 * disturbances, limits, integrator settings, and the seed.
 */
typedef struct PlatoonScenario PlatoonScenario;

/**
 * Opaque recorded closed-loop run at full integrator resolution.
 */
typedef struct PlatoonTrajectory PlatoonTrajectory;

/**
 * Flat scalar view of a string-stability certificate.
 */
typedef struct {
  /**
   * Number of follower pairs covered by the diagonal-scaling test.
   */
  size_t pairs;
  /**
   * Declared lower sandwich coefficient of the storage function.
   */
  double alpha_lo;
  /**
   * Declared upper sandwich coefficient of the storage function.
   */
  double alpha_hi;
  /**
   * Declared exponential decay rate.
   */
  double alpha;
  /**
   * Smallest eigenvalue of the symmetrized decay form (cross-check).
   */
  double alpha_symmetric;
  /**
   * Rigorous lower sandwich coefficient from the symmetrized storage form.
   */
  double alpha_lo_symmetric;
  /**
   * Rigorous upper sandwich coefficient from the symmetrized storage form.
   */
  double alpha_hi_symmetric;
  /**
   * Coupling magnitude `a*gamma_dp + b*gamma_dv`.
   */
  double d;
  /**
   * Margin split between self-decay and neighbor influence.
   */
  double upsilon;
  /**
   * Small-gain value; below one means string stable.
   */
  double gamma_tilde;
  /**
   * Worst-case deviation amplification `1 / (1 - gamma_tilde)`.
   */
  double recursive_bound_factor;
  /**
   * Geometric ratio of the certifying diagonal scaling.
   */
  double c_ratio;
  /**
   * Smallest eigenvalue of the symmetrized scaled comparison matrix.
   */
  double pd_margin;
  /**
   * Whether `gamma_tilde` lies strictly inside (0, 1) or is zero.
   */
  bool string_stable;
} PlatoonCertificate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates the benchmark scenario: an 11-vehicle platoon with the reference
 * gains, speed schedule, disturbance pulses, and integrator settings.
 *
 * Never fails. Release the handle with [`platoon_scenario_free`].
 */
PlatoonScenario *platoon_scenario_baseline(void);

/**
 * Loads and validates a scenario from a TOML config file.
 *
 * On success writes a new handle to `out`; release it with
 * [`platoon_scenario_free`].
 *
 * # Safety
 * `path` must be a valid nul-terminated string and `out` a valid pointer.
 */
PlatoonStatus platoon_scenario_from_toml(const char *path, PlatoonScenario **out);

/**
 * Number of vehicles in the scenario's platoon.
 *
 * Returns 0 if `scenario` is null.
 *
 * # Safety
 * `scenario` must be null or a live handle from this library.
 */
size_t platoon_scenario_vehicles(const PlatoonScenario *scenario);

/**
 * Resizes the platoon, keeping every other setting.
 *
 * Rejects sizes the rest of the scenario cannot host (for example a size
 * below a disturbance's target vehicle); on rejection the scenario is left
 * unchanged.
 *
 * # Safety
 * `scenario` must be null or a live handle from this library.
 */
PlatoonStatus platoon_scenario_set_size(PlatoonScenario *scenario, size_t n_vehicles);

/**
 * Replaces the seed that draws the platoon's initial conditions.
 *
 * # Safety
 * `scenario` must be null or a live handle from this library.
 */
PlatoonStatus platoon_scenario_set_seed(PlatoonScenario *scenario, uint64_t seed);

/**
 * Releases a scenario handle. A null handle is ignored.
 *
 * # Safety
 * `scenario` must be null or a live handle, and must not be used afterward.
 */
void platoon_scenario_free(PlatoonScenario *scenario);

/**
 * Runs the scenario's closed loop and writes a new trajectory handle to
 * `out`. Identical scenarios produce bit-identical trajectories.
 *
 * Release the handle with [`platoon_trajectory_free`].
 *
 * # Safety
 * `scenario` must be null or a live handle and `out` a valid pointer.
 */
PlatoonStatus platoon_simulate(const PlatoonScenario *scenario, PlatoonTrajectory **out);

/**
 * Number of recorded samples (integrator steps plus one).
 *
 * Returns 0 if `traj` is null.
 *
 * # Safety
 * `traj` must be null or a live handle from this library.
 */
size_t platoon_trajectory_samples(const PlatoonTrajectory *traj);

/**
 * Number of vehicles recorded in the trajectory.
 *
 * Returns 0 if `traj` is null.
 *
 * # Safety
 * `traj` must be null or a live handle from this library.
 */
size_t platoon_trajectory_vehicles(const PlatoonTrajectory *traj);

/**
 * Copies the sample times into `buf`, whose length `len` must equal
 * [`platoon_trajectory_samples`].
 *
 * # Safety
 * `traj` must be null or a live handle; `buf` must point to `len` doubles.
 */
PlatoonStatus platoon_trajectory_times(const PlatoonTrajectory *traj, double *buf, size_t len);

/**
 * Copies one vehicle's signal into `buf`, whose length `len` must equal
 * [`platoon_trajectory_samples`].
 *
 * `signal` is one of `p`, `v`, `u_ctrl`, `u_app`, `dp`, `dv`, `rho1`,
 * `rho2` — the same names the CSV columns use.
 *
 * # Safety
 * `traj` must be null or a live handle; `signal` must be a valid
 * nul-terminated string; `buf` must point to `len` doubles.
 */
PlatoonStatus platoon_trajectory_signal(const PlatoonTrajectory *traj,
                                        size_t vehicle,
                                        const char *signal,
                                        double *buf,
                                        size_t len);

/**
 * Writes the trajectory as CSV (header `t` then per-vehicle signal
 * columns, decimated to the scenario's output interval).
 *
 * # Safety
 * `traj` must be null or a live handle; `path` must be a valid
 * nul-terminated string.
 */
PlatoonStatus platoon_trajectory_write_csv(const PlatoonTrajectory *traj, const char *path);

/**
 * Releases a trajectory handle. A null handle is ignored.
 *
 * # Safety
 * `traj` must be null or a live handle, and must not be used afterward.
 */
void platoon_trajectory_free(PlatoonTrajectory *traj);

/**
 * Certifies string stability of the scenario's gains and writes the
 * scalar certificate fields to `out`.
 *
 * The diagonal-scaling test covers the scenario's follower pairs (at
 * least one).
 *
 * # Safety
 * `scenario` must be null or a live handle and `out` a valid pointer.
 */
PlatoonStatus platoon_certify(const PlatoonScenario *scenario, PlatoonCertificate *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLATOON_H */
