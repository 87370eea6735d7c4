#ifndef NFUCA_H
#define NFUCA_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum NfucaStatus {
  NFUCA_STATUS_OK = 0,
  NFUCA_STATUS_NULL_POINTER = 1,
  NFUCA_STATUS_INVALID_ARGUMENT = 2,
  NFUCA_STATUS_VALIDATION = 3,
  NFUCA_STATUS_OUT_OF_RANGE = 4,
  NFUCA_STATUS_DIMENSION_MISMATCH = 5,
  NFUCA_STATUS_PARSE = 6,
  NFUCA_STATUS_IO = 7,
  NFUCA_STATUS_BUFFER_TOO_SMALL = 8,
  NFUCA_STATUS_PANIC = 9,
} NfucaStatus;

// Analog TTD/PS beamformer together with the geometry it was designed for.
typedef struct NfucaBeamformer NfucaBeamformer;

// Validated scenario: array, subcarrier grid, users and hybrid settings.
typedef struct NfucaScenario NfucaScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *nfuca_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *nfuca_version(void);

// Builds a UCA scenario without users. `radius_m <= 0` selects the
// half-wavelength spacing radius `N·λc/(4π)`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle pointer.
enum NfucaStatus nfuca_scenario_new_uca(size_t n_antennas,
                                        double radius_m,
                                        double fc_hz,
                                        double bandwidth_hz,
                                        size_t n_subcarriers,
                                        size_t n_ttd_per_chain,
                                        double tau_max_s,
                                        double snr_db,
                                        struct NfucaScenario **out);

// Builds a scenario from a TOML configuration document.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum NfucaStatus nfuca_scenario_from_toml(const char *toml, struct NfucaScenario **out);

// Replaces the users, one RF chain each. `r_m` and `phi_rad` hold `k`
// entries.
//
// # Safety
// `scenario` must be a live handle; `r_m` and `phi_rad` must each point to
// `k` readable doubles.
enum NfucaStatus nfuca_scenario_set_users(struct NfucaScenario *scenario,
                                          const double *r_m,
                                          const double *phi_rad,
                                          size_t k);

// # Safety
// `scenario` must be null or a handle not yet freed.
void nfuca_scenario_free(struct NfucaScenario *scenario);

// Writes the antenna count, RF chain count, TTDs per chain and subcarrier
// count. Any output pointer may be null.
//
// # Safety
// `scenario` must be a live handle; non-null outputs must be writable.
enum NfucaStatus nfuca_scenario_dims(const struct NfucaScenario *scenario,
                                     size_t *n_antennas,
                                     size_t *n_rf_chains,
                                     size_t *n_ttd_per_chain,
                                     size_t *n_subcarriers);

// Closed-form TTD/PS design focused on the scenario's users.
//
// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
enum NfucaStatus nfuca_design_analytical(const struct NfucaScenario *scenario,
                                         struct NfucaBeamformer **out);

// Alternating PS/TTD optimization under the delay budget. Zero for
// `search_steps_x` or `max_iters` selects the default.
//
// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
enum NfucaStatus nfuca_design_joint(const struct NfucaScenario *scenario,
                                    size_t search_steps_x,
                                    size_t max_iters,
                                    struct NfucaBeamformer **out);

// # Safety
// `bf` must be null or a handle not yet freed.
void nfuca_beamformer_free(struct NfucaBeamformer *bf);

// Normalized array gain of `chain` toward its own user on every subcarrier
// (`len >= n_subcarriers`).
//
// # Safety
// `bf` must be a live handle and `out` must point to `len` writable doubles.
enum NfucaStatus nfuca_beamformer_band_gains(const struct NfucaBeamformer *bf,
                                             size_t chain,
                                             double *out,
                                             size_t len);

// Sub-array delays of `chain` in seconds (`len >= n_ttd_per_chain`).
//
// # Safety
// `bf` must be a live handle and `out` must point to `len` writable doubles.
enum NfucaStatus nfuca_beamformer_delays(const struct NfucaBeamformer *bf,
                                         size_t chain,
                                         double *out,
                                         size_t len);

// Per-antenna phase shifts of `chain` in radians (`len >= n_antennas`).
//
// # Safety
// `bf` must be a live handle and `out` must point to `len` writable doubles.
enum NfucaStatus nfuca_beamformer_phases(const struct NfucaBeamformer *bf,
                                         size_t chain,
                                         double *out,
                                         size_t len);

// Serializes the beamformer to JSON. Release the string with
// [`nfuca_string_free`].
//
// # Safety
// `bf` must be a live handle and `out` a valid pointer.
enum NfucaStatus nfuca_beamformer_to_json(const struct NfucaBeamformer *bf, char **out);

// # Safety
// `s` must be null or a string returned by this library and not yet freed.
void nfuca_string_free(char *s);

// Bessel function of the first kind, Jₙ(x).
double nfuca_bessel_j(uint32_t order, double x);

// Gain function `₁F₂(1/2; 1, 3/2; −ε²)`. `converged` may be null.
//
// # Safety
// `value` must be writable; `converged` must be null or writable.
enum NfucaStatus nfuca_hyp1f2_gain(double eps, double *value, bool *converged);

// Smallest ε ≥ 0 at which the gain function falls to `1 − delta`.
//
// # Safety
// `eps` must be writable.
enum NfucaStatus nfuca_invert_gain_threshold(double delta, double *eps);

// Minimum TTD count per chain keeping the band gain at or above
// `1 − delta` for a user at `distance_m`.
//
// # Safety
// `q` must be writable.
enum NfucaStatus nfuca_min_ttd_count(double delta,
                                     double bandwidth_hz,
                                     double radius_m,
                                     double distance_m,
                                     size_t *q);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NFUCA_H */
