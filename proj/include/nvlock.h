#ifndef NVLOCK_H
#define NVLOCK_H

/* C API of the nvlock frequency-locked NV magnetometer simulator.
 *
 * All functions return an nvlk_status unless noted. Frequencies are Hz,
 * magnetic fields nT, temperatures K. Handles are opaque; every *_new/_load
 * has a matching *_free. Error details can be fetched with nvlk_last_error()
 * immediately after a failing call on the same thread.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define NVLK_API __declspec(dllexport)
#else
#define NVLK_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nvlk_status {
  NVLK_OK = 0,
  NVLK_ERR_CONFIG = 1,   /* bad arguments, unparseable or invalid config */
  NVLK_ERR_PROPERTY = 2, /* scenario ran but a checked property failed */
  NVLK_ERR_LOCK_LOST = 3 /* a lock could not be held or re-acquired */
} nvlk_status;

typedef struct nvlk_config nvlk_config; /* opaque scenario configuration */

NVLK_API const char* nvlk_version(void);

/* Message describing the most recent failure on this thread ("" if none). */
NVLK_API const char* nvlk_last_error(void);

/* ---- configuration ------------------------------------------------------ */

/* Built-in defaults. Never fails. */
NVLK_API nvlk_config* nvlk_config_default(void);

/* Parses a JSON config file (// comments allowed, unknown keys rejected).
 * Returns NULL on error; see nvlk_last_error(). */
NVLK_API nvlk_config* nvlk_config_load(const char* path);

NVLK_API void nvlk_config_free(nvlk_config* cfg);

NVLK_API nvlk_status nvlk_config_set_seed(nvlk_config* cfg, uint64_t seed);
NVLK_API nvlk_status nvlk_config_set_out_dir(nvlk_config* cfg, const char* dir);
NVLK_API nvlk_status nvlk_config_set_quiet(nvlk_config* cfg, int quiet);

/* ---- scenarios ---------------------------------------------------------- */

/* Runs one named scenario: "step", "range", "vector", "sensitivity" or
 * "spectrum". Artifacts and a manifest land in the config's out_dir. */
NVLK_API nvlk_status nvlk_run_scenario(const nvlk_config* cfg, const char* name);

/* Re-hashes every artifact listed in out_dir/manifest.txt. */
NVLK_API nvlk_status nvlk_verify_manifest(const char* out_dir);

/* ---- numeric helpers ----------------------------------------------------- */

/* Linear-model resonance pair for the axial projection b_nv (nT) and
 * temperature offset dt (K). */
NVLK_API nvlk_status nvlk_transitions_linear(double b_nv_nt, double dt_k, double* f_minus_hz,
                                             double* f_plus_hz);

/* Full-Hamiltonian pair for a lab-frame field on axis 0..3. */
NVLK_API nvlk_status nvlk_transitions_full(double bx_nt, double by_nt, double bz_nt,
                                           int axis_index, double dt_k, double* f_minus_hz,
                                           double* f_plus_hz);

/* Inverse of the linear pair model. */
NVLK_API nvlk_status nvlk_field_from_pair(double f_plus_hz, double f_minus_hz, double* b_nv_nt,
                                          double* dt_k);

/* Discrete closed-loop poles and stability for plant gain g (V/Hz), filter
 * coefficient alpha, integrator gain k_i (Hz/V) and update rate (Hz). */
NVLK_API nvlk_status nvlk_closed_loop_analysis(double g_v_per_hz, double alpha,
                                               double k_i_hz_per_v, double update_rate_hz,
                                               double* pole_magnitudes /* [2] */, int* stable,
                                               double* settling_time_s);

#ifdef __cplusplus
}
#endif

#endif /* NVLOCK_H */
