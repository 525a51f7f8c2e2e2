#ifndef GENLAP_H
#define GENLAP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GenlapStatus {
  GENLAP_STATUS_OK = 0,
  GENLAP_STATUS_INVALID_INPUT = 1,
  GENLAP_STATUS_INVALID_CONFIG = 2,
  GENLAP_STATUS_NUMERIC = 3,
  GENLAP_STATUS_IO = 4,
  GENLAP_STATUS_NULL_POINTER = 5,
  GENLAP_STATUS_PANIC = 6,
} GenlapStatus;

// Dense square matrix.
typedef struct GenlapMatrix GenlapMatrix;

// Output of [`genlap_infer`].
typedef struct GenlapReport GenlapReport;

// Leading eigenpairs ordered by eigenvalue magnitude.
typedef struct GenlapSpectrum GenlapSpectrum;

// Per-spike summary of a report (k is 0-based).
typedef struct GenlapSpike {
  size_t k;
  double delta_hat;
  double t_hat;
  double a_hat;
  double delta_tilde;
  double sigma_eig;
} GenlapSpike;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next genlap call on the same thread.
const char *genlap_last_error(void);

// Library version as a static NUL-terminated string.
const char *genlap_version(void);

// Copies an n x n row-major buffer into a new matrix.
//
// # Safety
// `data` must point to n * n readable doubles and `out` must be writable.
enum GenlapStatus genlap_matrix_new(const double *data, size_t n, struct GenlapMatrix **out);

// Reads a binary (`ATGL`) or `.mtx` Matrix Market file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum GenlapStatus genlap_matrix_read(const char *path, struct GenlapMatrix **out);

// # Safety
// `m` must be a live matrix handle and `path` a NUL-terminated string.
enum GenlapStatus genlap_matrix_write(const struct GenlapMatrix *m, const char *path);

// Dimension of the matrix, 0 for NULL.
//
// # Safety
// `m` must be NULL or a live matrix handle.
size_t genlap_matrix_dim(const struct GenlapMatrix *m);

// # Safety
// `m` must be a live matrix handle and `out` writable.
enum GenlapStatus genlap_matrix_get(const struct GenlapMatrix *m, size_t i, size_t j, double *out);

// # Safety
// `m` must be NULL or a handle not yet freed.
void genlap_matrix_free(struct GenlapMatrix *m);

// Draws one network from the 3000-node mixed-membership design.
//
// # Safety
// `out` must be writable.
enum GenlapStatus genlap_simulate_standard(double theta,
                                           double rho,
                                           uint64_t seed,
                                           struct GenlapMatrix **out);

// X = L^{-α} X̃ L^{-α} with uniform τ and λ.
//
// # Safety
// `x` must be a live matrix handle and `out` writable.
enum GenlapStatus genlap_laplacian(const struct GenlapMatrix *x,
                                   double alpha,
                                   double tau,
                                   double lambda,
                                   struct GenlapMatrix **out);

// All eigenvalues and the `m` leading eigenvectors of a symmetric matrix.
//
// # Safety
// `a` must be a live matrix handle and `out` writable.
enum GenlapStatus genlap_eig_spiked(const struct GenlapMatrix *a,
                                    size_t m,
                                    struct GenlapSpectrum **out);

// # Safety
// `s` must be a live spectrum handle and `out` writable.
enum GenlapStatus genlap_spectrum_eigenvalue(const struct GenlapSpectrum *s, size_t k, double *out);

// Copies eigenvector `k` into `buf`, which must hold `len` = n doubles.
//
// # Safety
// `s` must be a live spectrum handle and `buf` writable for `len` doubles.
enum GenlapStatus genlap_spectrum_vector(const struct GenlapSpectrum *s,
                                         size_t k,
                                         double *buf,
                                         size_t len);

// # Safety
// `s` must be NULL or a handle not yet freed.
void genlap_spectrum_free(struct GenlapSpectrum *s);

// Estimated number of strong spikes.
//
// # Safety
// `x` must be a live matrix handle and `out` writable.
enum GenlapStatus genlap_estimate_rank(const struct GenlapMatrix *x,
                                       double alpha,
                                       double tau,
                                       double lambda,
                                       double c_exponent,
                                       size_t *out);

// Limit t of a spike δ whose weighted noise level is b = Σ_i c_i v_i².
//
// # Safety
// `out` must be writable.
enum GenlapStatus genlap_solve_tk(double delta, double b, double half_width, double *out);

// Plug-in analysis of an observed matrix. `k = 0` uses the rank estimate.
//
// # Safety
// `x` must be a live matrix handle and `out` writable.
enum GenlapStatus genlap_infer(const struct GenlapMatrix *x,
                               double alpha,
                               double tau,
                               double lambda,
                               size_t k,
                               double c_exponent,
                               struct GenlapReport **out);

// # Safety
// `r` must be NULL or a live report handle.
size_t genlap_report_k0(const struct GenlapReport *r);

// Number of analysed spikes.
//
// # Safety
// `r` must be NULL or a live report handle.
size_t genlap_report_spike_count(const struct GenlapReport *r);

// # Safety
// `r` must be a live report handle and `out` writable.
enum GenlapStatus genlap_report_spike(const struct GenlapReport *r,
                                      size_t k,
                                      struct GenlapSpike *out);

// The report as JSON. Release with [`genlap_string_free`].
//
// # Safety
// `r` must be a live report handle and `out` writable.
enum GenlapStatus genlap_report_json(const struct GenlapReport *r, char **out);

// # Safety
// `r` must be NULL or a handle not yet freed.
void genlap_report_free(struct GenlapReport *r);

// # Safety
// `s` must be NULL or a string returned by genlap and not yet freed.
void genlap_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GENLAP_H */
