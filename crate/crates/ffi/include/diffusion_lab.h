#ifndef DIFFUSION_LAB_H
#define DIFFUSION_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Module failures reuse the CLI exit codes.
 */
typedef enum DlStatus {
  DL_STATUS_OK = 0,
  DL_STATUS_NULL_POINTER = 1,
  DL_STATUS_CONFIG = 2,
  DL_STATUS_IO = 3,
  DL_STATUS_INVALID_UTF8 = 4,
  DL_STATUS_PANIC = 5,
  DL_STATUS_RESONANCE = 10,
  DL_STATUS_FOURIER = 11,
  DL_STATUS_NORMAL_FORM = 12,
  DL_STATUS_INADMISSIBLE = 13,
  DL_STATUS_SYMPLECTIC = 14,
  DL_STATUS_DYNAMICS = 15,
  DL_STATUS_MELNIKOV = 16,
  DL_STATUS_ACTION = 17,
  DL_STATUS_WEAK_KAM = 18,
} DlStatus;

/**
 * Opaque mechanical system.
 */
typedef struct DlSystem DlSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread. Valid until the next failing call.
 */
const char *dl_last_error(void);

/**
 * Two uncoupled pendulums `c1(cos x1 - 1) + c2(cos x2 - 1)` with identity kinetic form.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum DlStatus dl_system_pendulums(double c1, double c2, struct DlSystem **out);

/**
 * System described by a scenario TOML string, or the bundled scenario when `toml` is null.
 *
 * # Safety
 * `toml` must be null or a NUL-terminated string; `out` must be valid for writes.
 */
enum DlStatus dl_system_from_scenario(const char *toml, struct DlSystem **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `sys` must come from a `dl_system_*` constructor and not be used afterwards.
 */
void dl_system_free(struct DlSystem *sys);

/**
 * Lyapunov exponents `lambda1 >= lambda2` at the maximum of the potential.
 *
 * # Safety
 * `sys` must be a live handle; the output pointers must be valid for writes.
 */
enum DlStatus dl_hyperbolic_exponents(const struct DlSystem *sys, double *lambda1, double *lambda2);

/**
 * Corner actions of the linear saddle with exponents `lambda`, between `entry` and `exit`
 * in time `t`: the orbit through the saddle and the broken orbit through the origin.
 *
 * # Safety
 * The array pointers must reference two doubles each; the outputs must be valid for writes.
 */
enum DlStatus dl_corner_actions(const double *lambda,
                                const double *entry,
                                const double *exit,
                                double t,
                                double *through,
                                double *broken);

/**
 * Effective Hamiltonian `alpha(c)` from the discrete weak KAM solver on an `n x n` grid.
 *
 * # Safety
 * `sys` must be a live handle and `alpha` valid for writes.
 */
enum DlStatus dl_weak_kam_alpha(const struct DlSystem *sys,
                                double c1,
                                double c2,
                                uintptr_t n,
                                double t_step,
                                double *alpha);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIFFUSION_LAB_H */
