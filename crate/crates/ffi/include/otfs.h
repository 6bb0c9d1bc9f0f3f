#ifndef OTFS_H
#define OTFS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes. Values 2 to 4 match the exit codes of the `otfs` binary.
typedef enum OtfsStatus {
  OTFS_STATUS_OK = 0,
  OTFS_STATUS_IO = 1,
  OTFS_STATUS_CONFIG = 2,
  OTFS_STATUS_CAP = 3,
  OTFS_STATUS_NUMERICAL = 4,
  OTFS_STATUS_INVALID_ARGUMENT = 5,
  OTFS_STATUS_PANIC = 6,
} OtfsStatus;

// Opaque experiment configuration.
typedef struct OtfsConfig OtfsConfig;

// Opaque sweep result.
typedef struct OtfsSweep OtfsSweep;

// One SNR point of a sweep.
typedef struct OtfsSweepPoint {
  double snr_db;
  uint64_t frames;
  uint64_t bit_errors;
  double ber;
  uint64_t seed;
  double wall_time_s;
} OtfsSweepPoint;

// Summary of a rank scan. `kappa` saturates at `UINT64_MAX`.
typedef struct OtfsRankSummary {
  uint64_t min_rank;
  uint64_t diversity_order;
  uint64_t kappa;
  // 1 when every ordered pair was covered, 0 for a sampled scan.
  uint8_t exhaustive;
} OtfsRankSummary;

// A complex sample, layout-compatible with `double[2]`.
typedef struct OtfsComplex {
  double re;
  double im;
} OtfsComplex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last error on this thread, or NULL. Valid until the next failing call on the
// same thread.
const char *otfs_last_error(void);

// Parse a TOML configuration string.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum OtfsStatus otfs_config_from_toml(const char *text, struct OtfsConfig **out);

// Load a TOML configuration file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum OtfsStatus otfs_config_from_file(const char *path, struct OtfsConfig **out);

// Release a configuration. NULL is ignored.
//
// # Safety
// `cfg` must come from this library and not be used afterwards.
void otfs_config_free(struct OtfsConfig *cfg);

// Replace the base seed.
//
// # Safety
// `cfg` must be a live handle.
enum OtfsStatus otfs_config_set_seed(struct OtfsConfig *cfg, uint64_t seed);

// Copy the hex fingerprint (64 characters plus NUL) into `buf`.
//
// # Safety
// `cfg` must be a live handle and `buf` writable for `len` bytes.
enum OtfsStatus otfs_config_fingerprint(const struct OtfsConfig *cfg, char *buf, size_t len);

// Run the configured BER sweep.
//
// # Safety
// `cfg` must be a live handle and `out` a valid pointer.
enum OtfsStatus otfs_run_sweep(const struct OtfsConfig *cfg, struct OtfsSweep **out);

// Number of SNR points in a sweep; 0 for NULL.
//
// # Safety
// `sweep` must be NULL or a live handle.
size_t otfs_sweep_len(const struct OtfsSweep *sweep);

// Bits carried per frame.
//
// # Safety
// `sweep` must be NULL or a live handle.
uint64_t otfs_sweep_bits_per_frame(const struct OtfsSweep *sweep);

// Copy point `index` into `out`.
//
// # Safety
// `sweep` must be a live handle and `out` a valid pointer.
enum OtfsStatus otfs_sweep_point(const struct OtfsSweep *sweep,
                                 size_t index,
                                 struct OtfsSweepPoint *out);

// Write the sweep CSV to `path` and its TOML sidecar next to it.
//
// # Safety
// `sweep` must be a live handle and `path` a NUL-terminated string.
enum OtfsStatus otfs_sweep_write_csv(const struct OtfsSweep *sweep, const char *path);

// CSV text of a sweep as a newly allocated string; release it with [`otfs_string_free`].
//
// # Safety
// `sweep` must be a live handle.
char *otfs_sweep_csv(const struct OtfsSweep *sweep);

// Release a sweep. NULL is ignored.
//
// # Safety
// `sweep` must come from this library and not be used afterwards.
void otfs_sweep_free(struct OtfsSweep *sweep);

// Release a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void otfs_string_free(char *s);

// Rank scan of the configured geometry.
//
// # Safety
// `cfg` must be a live handle and `out` a valid pointer.
enum OtfsStatus otfs_rank(const struct OtfsConfig *cfg, struct OtfsRankSummary *out);

// OTFS modulation of an `M x N` delay-Doppler frame stored at `k + N l`; writes `M N`
// time samples.
//
// # Safety
// `dd` must be readable and `out` writable for `m * n` elements.
enum OtfsStatus otfs_modulate(size_t m,
                              size_t n,
                              const struct OtfsComplex *dd,
                              struct OtfsComplex *out);

// Inverse of [`otfs_modulate`].
//
// # Safety
// `samples` must be readable and `out` writable for `m * n` elements.
enum OtfsStatus otfs_demodulate(size_t m,
                                size_t n,
                                const struct OtfsComplex *samples,
                                struct OtfsComplex *out);

// BER lower bound for `kappa` rank-one pairs at linear SNR `gamma`.
double otfs_ber_lower_bound(double gamma, size_t m, size_t n, uint64_t kappa);

// High-SNR form of [`otfs_ber_lower_bound`].
double otfs_ber_lower_bound_asymptotic(double gamma, size_t m, size_t n, uint64_t kappa);

// Exact pairwise error probability of a rank-one BPSK difference.
double otfs_pep_rank_one(double gamma, size_t m, size_t n);

// Nonzero singular value `sqrt(4 P M N)` of an all-constant BPSK difference.
double otfs_rank_one_singular_value(size_t m, size_t n, size_t p);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OTFS_H */
