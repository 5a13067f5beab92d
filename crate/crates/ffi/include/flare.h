/* Generated by cbindgen from the flare-ffi crate. Do not edit. */

#ifndef FLARE_H
#define FLARE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum FlareStatus {
  FLARE_STATUS_OK = 0,
  FLARE_STATUS_NULL_POINTER = 1,
  FLARE_STATUS_INVALID_ARGUMENT = 2,
  FLARE_STATUS_CONFIG = 3,
  // No block count meets the threshold within the budget.
  FLARE_STATUS_INFEASIBLE = 4,
  FLARE_STATUS_IO = 5,
  FLARE_STATUS_INTERNAL = 6,
} FlareStatus;

typedef enum FlareMethod {
  FLARE_METHOD_FLARE = 0,
  FLARE_METHOD_MADDPG_ONLY = 1,
  FLARE_METHOD_STATIC = 2,
  // Mobility and clustering only.
  FLARE_METHOD_NONE = 3,
} FlareMethod;

// Opaque simulation of one seed.
typedef struct FlareSimulation FlareSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call on the same thread.
const char *flare_last_error(void);

// Library version as a static NUL-terminated string.
const char *flare_version(void);

// LoS probability at elevation `theta` (radians) with the default
// dense-urban constants.
//
// # Safety
// `out` must be null or valid for one `double` write.
enum FlareStatus flare_los_probability(double theta, double *out);

// Expected received power of a UE at horizontal distance `distance_m`
// from a UAV at `altitude_m`, with unit fading and default constants.
//
// # Safety
// `out` must be null or valid for one `double` write.
enum FlareStatus flare_effective_power(double p_tx,
                                       double distance_m,
                                       double altitude_m,
                                       double *out);

// Shannon rate in bit/s.
//
// # Safety
// `out` must be null or valid for one `double` write.
enum FlareStatus flare_achievable_rate(double bandwidth,
                                       double power_eff,
                                       double interference,
                                       double noise,
                                       double *out);

// Smallest block count meeting `r_th`. Returns `Infeasible` (with
// `*out_blocks` untouched) when the link has zero rate or needs more than
// `block_limit` blocks.
//
// # Safety
// `out_blocks` must be null or valid for one `uint32_t` write.
enum FlareStatus flare_oracle_min_blocks(double power_eff,
                                         double interference,
                                         double noise,
                                         double block_size,
                                         double r_th,
                                         uint32_t block_limit,
                                         uint32_t *out_blocks);

// Create a simulation from config text (`key = value` lines; may be empty
// or just `profile = desk`).
//
// # Safety
// `config_text` must be null or a valid NUL-terminated string; `out` must
// be null or valid for one pointer write.
enum FlareStatus flare_simulation_new(const char *config_text,
                                      enum FlareMethod method,
                                      uint64_t seed,
                                      struct FlareSimulation **out);

// Advance one frame. Writes the frame's served-UE count and the selected
// cluster count.
//
// # Safety
// `sim` must be a live handle; out-pointers must be null or writable.
enum FlareStatus flare_simulation_step(struct FlareSimulation *sim,
                                       uint32_t *served,
                                       uint32_t *k_star);

// Index of the next frame to run.
//
// # Safety
// `sim` must be a live handle; `out` must be null or writable.
enum FlareStatus flare_simulation_next_frame(const struct FlareSimulation *sim, uint64_t *out);

// Audited timesteps and constraint violations so far.
//
// # Safety
// `sim` must be a live handle; out-pointers must be null or writable.
enum FlareStatus flare_simulation_audit(const struct FlareSimulation *sim,
                                        uint64_t *steps,
                                        uint64_t *violations);

// Release a handle. Null is ignored.
//
// # Safety
// `sim` must be null or a handle from [`flare_simulation_new`] that has
// not been freed.
void flare_simulation_free(struct FlareSimulation *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLARE_H */
