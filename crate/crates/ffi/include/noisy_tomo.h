#ifndef NOISY_TOMO_H
#define NOISY_TOMO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NtStatus {
  NT_STATUS_OK = 0,
  NT_STATUS_NULL_POINTER = 1,
  NT_STATUS_INVALID_ARGUMENT = 2,
  // Rejected input: unknown names, bad parameters, malformed JSON.
  NT_STATUS_CONFIG = 3,
  // Incomplete protocol, degenerate information or another numerical failure.
  NT_STATUS_NUMERICAL = 4,
  NT_STATUS_BUFFER_TOO_SMALL = 5,
  NT_STATUS_PANIC = 6,
} NtStatus;

typedef enum NtSampling {
  NT_SAMPLING_MULTINOMIAL = 0,
  NT_SAMPLING_POISSON = 1,
  NT_SAMPLING_EXPECTED = 2,
} NtSampling;

typedef struct NtChannel NtChannel;

typedef struct NtMeasurement NtMeasurement;

typedef struct NtProtocol NtProtocol;

typedef struct NtReconstructInfo {
  size_t iterations;
  bool converged;
  double final_residual;
  double log_likelihood;
  // `sqrt(N/n)`; multiply the estimate by it to get the likelihood norm.
  double norm_scale;
} NtReconstructInfo;

typedef struct NtBlochExtrema {
  double l_min;
  double l_max;
  double argmin_theta;
  double argmin_phi;
  double argmax_theta;
  double argmax_phi;
  // Number of grid points written by [`nt_bloch_map`].
  size_t points;
} NtBlochExtrema;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Release with [`nt_string_free`].
char *nt_last_error_message(void);

// # Safety
// `s` must be null or a string returned by this library.
void nt_string_free(char *s);

// Builds a named protocol (`tetrahedron`, `cube`, `octahedron`) with sample size `n`.
//
// # Safety
// `kind` must be a NUL-terminated string; `out` must be writable.
enum NtStatus nt_protocol_new(const char *kind, double n, struct NtProtocol **out);

// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum NtStatus nt_protocol_from_json(const char *json, struct NtProtocol **out);

// Serializes a protocol; release the string with [`nt_string_free`].
//
// # Safety
// `p` must be a live handle; `out` must be writable.
enum NtStatus nt_protocol_to_json(const struct NtProtocol *p, char **out);

// Rotates every measurement direction by `angle` about the unit axis `(ax, ay, az)` (right-hand rule).
//
// # Safety
// `p` must be a live handle; `out` must be writable.
enum NtStatus nt_protocol_rotate(const struct NtProtocol *p,
                                 double ax,
                                 double ay,
                                 double az,
                                 double angle,
                                 struct NtProtocol **out);

// Product protocol on `qubits` copies.
//
// # Safety
// `p` must be a live handle; `out` must be writable.
enum NtStatus nt_protocol_tensor_power(const struct NtProtocol *p,
                                       size_t qubits,
                                       struct NtProtocol **out);

// Number of rows, or 0 for a null handle.
//
// # Safety
// `p` must be null or a live handle.
size_t nt_protocol_len(const struct NtProtocol *p);

// Hilbert-space dimension, or 0 for a null handle.
//
// # Safety
// `p` must be null or a live handle.
size_t nt_protocol_dim(const struct NtProtocol *p);

// # Safety
// `p` must be null or a handle not yet freed.
void nt_protocol_free(struct NtProtocol *p);

// Parses a channel from the short text form (`identity`, `amplitude:t=1.5T1`,
// `dephasing:t=0.8T2`, `bit_flip:p=0.1`, `phase_flip:p=0.1`) or, when the
// string starts with `{`, from a JSON channel entry including Kraus lists.
//
// # Safety
// `spec` must be a NUL-terminated string; `out` must be writable.
enum NtStatus nt_channel_parse(const char *spec, struct NtChannel **out);

// # Safety
// `c` must be null or a live handle.
size_t nt_channel_dim(const struct NtChannel *c);

// # Safety
// `c` must be null or a handle not yet freed.
void nt_channel_free(struct NtChannel *c);

// Fuzzy measurement operators of `p` seen through `c`. A null channel gives the
// ideal measurement; a single-qubit channel on a multi-qubit protocol acts on
// every qubit independently.
//
// # Safety
// `p` must be a live handle; `c` null or live; `out` writable.
enum NtStatus nt_measurement_new(const struct NtProtocol *p,
                                 const struct NtChannel *c,
                                 struct NtMeasurement **out);

// # Safety
// `m` must be null or a live handle.
size_t nt_measurement_len(const struct NtMeasurement *m);

// # Safety
// `m` must be null or a live handle.
size_t nt_measurement_dim(const struct NtMeasurement *m);

// # Safety
// `m` must be null or a handle not yet freed.
void nt_measurement_free(struct NtMeasurement *m);

// Cell probabilities `t_j <c|Λ_j|c> / n`, one per row.
//
// # Safety
// `amps` must hold `2 * dim` doubles and `out` `out_len` doubles.
enum NtStatus nt_probabilities(const struct NtMeasurement *m,
                               const double *amps,
                               size_t dim,
                               double *out,
                               size_t out_len);

// Loss spectrum of the state: the `nu` variances `d_i` (descending) go to
// `d_out`, the scaled loss `L = n Σ d_i` to `l_out`.
//
// # Safety
// `amps` must hold `2 * dim` doubles, `d_out` `d_cap` doubles; `nu_out` and
// `l_out` may be null.
enum NtStatus nt_loss_spectrum(const struct NtMeasurement *m,
                               const double *amps,
                               size_t dim,
                               double *d_out,
                               size_t d_cap,
                               size_t *nu_out,
                               double *l_out);

// Draws one count vector of total `n` (measurement sample size).
//
// # Safety
// `amps` must hold `2 * dim` doubles and `counts_out` `cap` integers.
enum NtStatus nt_sample_counts(const struct NtMeasurement *m,
                               const double *amps,
                               size_t dim,
                               uint64_t seed,
                               enum NtSampling model,
                               uint64_t *counts_out,
                               size_t cap);

// Maximum-likelihood pure state for `counts` with default options. The unit-norm
// estimate goes to `amps_out` as `2 * dim` doubles; `info` may be null.
//
// # Safety
// `counts` must hold `len` integers and `amps_out` `2 * dim` doubles.
enum NtStatus nt_reconstruct(const struct NtMeasurement *m,
                             const uint64_t *counts,
                             size_t len,
                             double *amps_out,
                             size_t dim,
                             struct NtReconstructInfo *info);

// Scaled loss `L(θ, φ)` over a `theta × phi` grid (poles once each). When
// `l_out` is non-null it receives `(theta - 2) * phi + 2` values as
// `theta, phi, L` triples in grid order.
//
// # Safety
// `p`, `c` must be live single-qubit handles; `extrema` writable; `l_out`
// null or holding `cap` doubles.
enum NtStatus nt_bloch_map(const struct NtProtocol *p,
                           const struct NtChannel *c,
                           size_t theta,
                           size_t phi,
                           struct NtBlochExtrema *extrema,
                           double *l_out,
                           size_t cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NOISY_TOMO_H */
