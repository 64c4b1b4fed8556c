/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef MSRSIM_H
#define MSRSIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define MSR_APPROACH_CP 0

#define MSR_APPROACH_UP 1

/**
 * Result code of every call.
 */
typedef enum {
  MSR_STATUS_OK = 0,
  MSR_STATUS_NULL_ARGUMENT = 1,
  MSR_STATUS_INVALID_UTF8 = 2,
  MSR_STATUS_PARSE_ERROR = 3,
  MSR_STATUS_UNKNOWN_ROUTER = 4,
  MSR_STATUS_UNKNOWN_ADDRESS = 5,
  MSR_STATUS_UNKNOWN_TARGET = 6,
  MSR_STATUS_INVALID_ARGUMENT = 7,
  MSR_STATUS_INTERNAL = 99,
} MsrStatus;

/**
 * Opaque simulator handle.
 */
typedef struct MsrSim MsrSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses `scenario` and builds a simulator at t=0.
 *
 * `approach` is `MSR_APPROACH_CP` or `MSR_APPROACH_UP`. `seed` may be null
 * to keep the scenario seed. On success `*out` owns the new handle.
 *
 * # Safety
 * `scenario` must be a NUL-terminated string; `seed` null or valid; `out`
 * a writable pointer.
 */
MsrStatus msr_sim_new(const char *scenario, uint32_t approach, const uint64_t *seed, MsrSim **out);

/**
 * Advances the clock to `until_ms`. `quiescent` may be null.
 *
 * # Safety
 * `sim` must come from [`msr_sim_new`]; `quiescent` null or writable.
 */
MsrStatus msr_sim_run_until(MsrSim *sim, uint64_t until_ms, bool *quiescent);

/**
 * Renders the routing table of a router, MS-Router or UPF.
 *
 * # Safety
 * `sim` from [`msr_sim_new`], `router` NUL-terminated, `out` writable.
 */
MsrStatus msr_sim_routes(const MsrSim *sim, const char *router, bool all, bool machine, char **out);

/**
 * Traces a packet from `src` to `dst`, each an address or node name.
 *
 * # Safety
 * `sim` from [`msr_sim_new`], `src` and `dst` NUL-terminated, `out`
 * writable.
 */
MsrStatus msr_sim_trace(const MsrSim *sim,
                        const char *src,
                        const char *dst,
                        bool machine,
                        char **out);

/**
 * Schedules a scripted event at `at_ms`. `event` uses the scenario event
 * syntax without the time, e.g. `link-down upf1.pdu-1`.
 *
 * # Safety
 * `sim` from [`msr_sim_new`], `event` NUL-terminated.
 */
MsrStatus msr_sim_inject(MsrSim *sim, uint64_t at_ms, const char *event);

/**
 * The event log so far.
 *
 * # Safety
 * `sim` from [`msr_sim_new`], `out` writable.
 */
MsrStatus msr_sim_event_log(const MsrSim *sim, bool machine, char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void msr_string_free(char *s);

/**
 * Destroys a simulator. Null is ignored.
 *
 * # Safety
 * `sim` must be null or a handle from [`msr_sim_new`] not yet freed.
 */
void msr_sim_free(MsrSim *sim);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *msr_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSRSIM_H */
