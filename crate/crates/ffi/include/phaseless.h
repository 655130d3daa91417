#ifndef PHASELESS_H
#define PHASELESS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum PhlsStatus {
  PHLS_STATUS_OK = 0,
  PHLS_STATUS_NULL_POINTER = 1,
  PHLS_STATUS_INVALID_ARGUMENT = 2,
  PHLS_STATUS_PRECONDITION_VIOLATED = 3,
  PHLS_STATUS_NUMERICAL = 4,
  PHLS_STATUS_IO = 5,
  PHLS_STATUS_FORMAT = 6,
  PHLS_STATUS_PANIC = 7,
} PhlsStatus;

// Experiment configuration handle.
typedef struct PhlsConfig PhlsConfig;

// Phantom handle.
typedef struct PhlsPhantom PhlsPhantom;

// Run report handle.
typedef struct PhlsReport PhlsReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failing call on this thread, or null. Owned by the library.
const char *phls_last_error_message(void);

// Releases a string returned by the library.
//
// # Safety
// `s` must come from this library and not have been freed.
void phls_string_free(char *s);

// Default configuration.
struct PhlsConfig *phls_config_default(void);

// Parses a TOML configuration.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum PhlsStatus phls_config_from_toml(const char *toml, struct PhlsConfig **out);

// Loads a TOML configuration file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum PhlsStatus phls_config_load(const char *path, struct PhlsConfig **out);

// Serializes a configuration to TOML; release with `phls_string_free`.
//
// # Safety
// `cfg` must be a live handle and `out` a valid pointer.
enum PhlsStatus phls_config_to_toml(const struct PhlsConfig *cfg, char **out);

// # Safety
// `cfg` must be a live handle. Seeds above `INT64_MAX` are rejected.
enum PhlsStatus phls_config_set_seed(struct PhlsConfig *cfg, uint64_t seed);

// # Safety
// `cfg` must come from this library and not have been freed.
void phls_config_free(struct PhlsConfig *cfg);

// The phantom described by a configuration.
//
// # Safety
// `cfg` must be a live handle and `out` a valid pointer.
enum PhlsStatus phls_config_phantom(const struct PhlsConfig *cfg, struct PhlsPhantom **out);

// Empty phantom (`q = 0`).
struct PhlsPhantom *phls_phantom_new(void);

// Adds a bump to the unknown part (`unknown != 0`) or to the background.
//
// # Safety
// `q` must be a live handle and `center` point to three doubles.
enum PhlsStatus phls_phantom_add_bump(struct PhlsPhantom *q,
                                      int32_t unknown,
                                      const double *center,
                                      double radius,
                                      double amplitude);

// # Safety
// `q` must come from this library and not have been freed.
void phls_phantom_free(struct PhlsPhantom *q);

// Number of samples of the configured band grid.
//
// # Safety
// `cfg` must be a live handle and `out` a valid pointer.
enum PhlsStatus phls_band_len(const struct PhlsConfig *cfg, size_t *out);

// Band modulus `|u(k)|` of the chord `source -> receiver` on the configured band grid.
// `k_out` and `modulus_out` must hold `phls_band_len` doubles each; `k_out` may be null.
//
// # Safety
// Handles must be live; `source`/`receiver` point to three doubles; buffers hold `len` doubles.
enum PhlsStatus phls_chord_modulus(const struct PhlsConfig *cfg,
                                   const struct PhlsPhantom *q,
                                   const double *source,
                                   const double *receiver,
                                   double *k_out,
                                   double *modulus_out,
                                   size_t len);

// Line integral of the unknown along the chord, recovered from its band modulus
// sampled at `k` (uniform, as produced by `phls_chord_modulus`).
//
// # Safety
// `cfg` must be live; `source`/`receiver` point to three doubles; `k`/`modulus` hold `len` doubles.
enum PhlsStatus phls_chord_line_integral(const struct PhlsConfig *cfg,
                                         const double *source,
                                         const double *receiver,
                                         const double *k,
                                         const double *modulus,
                                         size_t len,
                                         double *out);

// Simulation, reconstruction and evaluation into `out_dir`.
//
// # Safety
// `cfg` must be live, `out_dir` NUL-terminated and `out` a valid pointer.
enum PhlsStatus phls_full_pipeline(const struct PhlsConfig *cfg,
                                   const char *out_dir,
                                   struct PhlsReport **out);

// Distinguishability probe between the configured phantom and its perturbation
// (or itself when `identical != 0`).
//
// # Safety
// `cfg` must be live and `out` a valid pointer.
enum PhlsStatus phls_verify_uniqueness(const struct PhlsConfig *cfg,
                                       int32_t identical,
                                       struct PhlsReport **out);

// Report as pretty JSON; release with `phls_string_free`.
//
// # Safety
// `r` must be live and `out` a valid pointer.
enum PhlsStatus phls_report_to_json(const struct PhlsReport *r, char **out);

// 1 when every flag passed, 0 otherwise (also 0 for a null handle).
//
// # Safety
// `r` must be live or null.
int32_t phls_report_all_passed(const struct PhlsReport *r);

// Named error norm of a report, e.g. `volume_rel_l2`.
//
// # Safety
// `r` must be live, `name` NUL-terminated and `out` a valid pointer.
enum PhlsStatus phls_report_error(const struct PhlsReport *r, const char *name, double *out);

// # Safety
// `r` must come from this library and not have been freed.
void phls_report_free(struct PhlsReport *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PHASELESS_H */
