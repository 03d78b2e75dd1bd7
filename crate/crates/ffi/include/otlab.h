#ifndef OTLAB_H
#define OTLAB_H

#include <stddef.h>
#include <stdint.h>

typedef enum OtlabStatus {
  OTLAB_STATUS_OK = 0,
  OTLAB_STATUS_NULL_POINTER = 1,
  OTLAB_STATUS_INVALID_ARGUMENT = 2,
  OTLAB_STATUS_NUMERICAL = 3,
  OTLAB_STATUS_PANIC = 4,
} OtlabStatus;

// Discrete Dirichlet-to-Neumann operator.
typedef struct OtlabDnMap OtlabDnMap;

// Optical medium sampled on a cubic grid.
typedef struct OtlabMedium OtlabMedium;

// Bounds and constants of the medium class.
typedef struct OtlabApriori {
  uint32_t n;
  double p;
  double lambda;
  double sobolev_bound;
  double cal_e;
  double k;
  double r0;
  double lipschitz;
  double diam;
  double alpha;
} OtlabApriori;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *otlab_last_error_message(void);

// Library version, a static NUL-terminated string.
const char *otlab_version(void);

// Admissible wave numbers are `0 < k <= k0` and `k >= k0_tilde`.
//
// # Safety
// `k0` and `k0_tilde` must be valid for writes.
enum OtlabStatus otlab_k_ranges(double lambda,
                                double cal_e,
                                uint32_t n,
                                double *k0,
                                double *k0_tilde);

// Evaluate `C_m^{(n-2)/2}` at a complex point.
//
// # Safety
// `re_out` and `im_out` must be valid for writes.
enum OtlabStatus otlab_gegenbauer_eval(uint32_t degree,
                                       uint32_t dimension,
                                       double re,
                                       double im,
                                       double *re_out,
                                       double *im_out);

// Predicted stability exponent for derivatives of order `h`.
//
// # Safety
// `value` must be valid for writes.
enum OtlabStatus otlab_delta_h(double alpha, uint32_t h, double *value);

// Build a medium on `[0, extent]^3` with `points` nodes per axis from nodal
// `mu_a` and `mu_s` arrays of length `points^3` (x1 fastest) and `B = 0`.
//
// # Safety
// `apriori` must point to a valid struct, the arrays must hold `len` values
// and `medium` must be valid for writes.
enum OtlabStatus otlab_medium_new(double extent,
                                  uintptr_t points,
                                  const struct OtlabApriori *apriori,
                                  const double *mu_a,
                                  const double *mu_s,
                                  uintptr_t len,
                                  struct OtlabMedium **medium);

// Constant-coefficient medium.
//
// # Safety
// `apriori` must point to a valid struct and `medium` must be valid for writes.
enum OtlabStatus otlab_medium_homogeneous(double extent,
                                          uintptr_t points,
                                          const struct OtlabApriori *apriori,
                                          double mu_a,
                                          double mu_s,
                                          struct OtlabMedium **medium);

// Number of grid nodes, or 0 for a null handle.
//
// # Safety
// `medium` must be null or a live handle.
uintptr_t otlab_medium_node_count(const struct OtlabMedium *medium);

// # Safety
// `medium` must be null or a handle not yet freed.
void otlab_medium_free(struct OtlabMedium *medium);

// Assemble the Dirichlet-to-Neumann operator of a medium.
//
// # Safety
// `medium` must be a live handle and `dn` must be valid for writes.
enum OtlabStatus otlab_dn_assemble(const struct OtlabMedium *medium, struct OtlabDnMap **dn);

// `a - b` for operators on the same boundary grid.
//
// # Safety
// `a` and `b` must be live handles and `diff` must be valid for writes.
enum OtlabStatus otlab_dn_difference(const struct OtlabDnMap *a,
                                     const struct OtlabDnMap *b,
                                     struct OtlabDnMap **diff);

// Number of boundary nodes, or 0 for a null handle.
//
// # Safety
// `dn` must be null or a live handle.
uintptr_t otlab_dn_size(const struct OtlabDnMap *dn);

// Copy the matrix row-major into `buffer` as interleaved `(re, im)` pairs;
// `len` counts doubles and must be `2 * size^2`.
//
// # Safety
// `dn` must be a live handle and `buffer` must be valid for `len` writes.
enum OtlabStatus otlab_dn_entries(const struct OtlabDnMap *dn, double *buffer, uintptr_t len);

// Grid node index of each boundary row, `size` entries.
//
// # Safety
// `dn` must be a live handle and `nodes` must be valid for `len` writes.
enum OtlabStatus otlab_dn_boundary_nodes(const struct OtlabDnMap *dn,
                                         uintptr_t *nodes,
                                         uintptr_t len);

// Operator norm from `H^{1/2}` to `H^{-1/2}` of the boundary.
//
// # Safety
// `dn` must be a live handle and `value` must be valid for writes.
enum OtlabStatus otlab_dn_star_norm(const struct OtlabDnMap *dn, uint64_t seed, double *value);

// # Safety
// `dn` must be null or a handle not yet freed.
void otlab_dn_free(struct OtlabDnMap *dn);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OTLAB_H */
