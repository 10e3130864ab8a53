#ifndef CRNLAB_H
#define CRNLAB_H

/* Generated by cbindgen from crates/crnlab-ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CrnStatus {
  CRN_STATUS_OK = 0,
  CRN_STATUS_NULL_POINTER = 1,
  CRN_STATUS_INVALID_UTF8 = 2,
  CRN_STATUS_PARSE_ERROR = 3,
  CRN_STATUS_INVALID_ARGUMENT = 4,
  CRN_STATUS_SIMULATION_ERROR = 5,
  CRN_STATUS_OUT_OF_RANGE = 6,
  CRN_STATUS_PANIC = 7,
} CrnStatus;

typedef enum CrnTermination {
  CRN_TERMINATION_TIME_LIMIT = 0,
  CRN_TERMINATION_EVENT_LIMIT = 1,
  CRN_TERMINATION_ABSORBED = 2,
  CRN_TERMINATION_STOP_RULE = 3,
} CrnTermination;

/**
 * Opaque reaction network.
 */
typedef struct CrnNetwork CrnNetwork;

/**
 * Opaque simulated trajectory.
 */
typedef struct CrnTrajectory CrnTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or an empty string.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *crn_last_error_message(void);

/**
 * Parses a model from NUL-terminated UTF-8 text.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum CrnStatus crn_network_parse(const char *text, struct CrnNetwork **out);

/**
 * Releases a network. Null is accepted.
 *
 * # Safety
 * `net` must come from [`crn_network_parse`] and not be used afterwards.
 */
void crn_network_free(struct CrnNetwork *net);

/**
 * # Safety
 * `net` must be a live handle and `out` a valid pointer.
 */
enum CrnStatus crn_network_species_count(const struct CrnNetwork *net, size_t *out);

/**
 * # Safety
 * `net` must be a live handle and `out` a valid pointer.
 */
enum CrnStatus crn_network_reaction_count(const struct CrnNetwork *net, size_t *out);

/**
 * Deficiency and weak reversibility of the network.
 *
 * # Safety
 * `net` must be a live handle; the out pointers must be valid.
 */
enum CrnStatus crn_network_structure(const struct CrnNetwork *net,
                                     int64_t *deficiency,
                                     bool *weakly_reversible);

/**
 * Simulates one trajectory from `x0` (length `len`, one count per species).
 * A `max_events` of zero selects the library default.
 *
 * # Safety
 * `net` must be a live handle, `x0` must point to `len` values and `out`
 * must be a valid pointer.
 */
enum CrnStatus crn_simulate(const struct CrnNetwork *net,
                            const uint64_t *x0,
                            size_t len,
                            uint64_t seed,
                            double max_time,
                            uint64_t max_events,
                            struct CrnTrajectory **out);

/**
 * Releases a trajectory. Null is accepted.
 *
 * # Safety
 * `traj` must come from [`crn_simulate`] and not be used afterwards.
 */
void crn_trajectory_free(struct CrnTrajectory *traj);

/**
 * Number of stored samples.
 *
 * # Safety
 * `traj` must be a live handle and `out` a valid pointer.
 */
enum CrnStatus crn_trajectory_len(const struct CrnTrajectory *traj, size_t *out);

/**
 * Copies sample `index`: its time and `state_len` species counts.
 *
 * # Safety
 * `traj` must be a live handle, `time` valid, and `state` must point to
 * `state_len` writable values.
 */
enum CrnStatus crn_trajectory_sample(const struct CrnTrajectory *traj,
                                     size_t index,
                                     double *time,
                                     uint64_t *state,
                                     size_t state_len);

/**
 * Why the simulation stopped, and how many events it fired.
 *
 * # Safety
 * `traj` must be a live handle; the out pointers must be valid.
 */
enum CrnStatus crn_trajectory_termination(const struct CrnTrajectory *traj,
                                          enum CrnTermination *termination,
                                          uint64_t *events);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CRNLAB_H */
