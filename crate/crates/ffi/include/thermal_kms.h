#ifndef THERMAL_KMS_H
#define THERMAL_KMS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Cutoff family selector for [`tk_cutoff_new`].
typedef enum TkCutoffKind {
  TK_CUTOFF_KIND_RAISED_COSINE = 0,
  TK_CUTOFF_KIND_SMOOTH_BUMP = 1,
} TkCutoffKind;

// Outcome of a call.
typedef enum TkStatus {
  TK_STATUS_OK = 0,
  TK_STATUS_NULL_POINTER = 1,
  TK_STATUS_DOMAIN = 2,
  TK_STATUS_SINGULAR = 3,
  TK_STATUS_DIVERGENT = 4,
  TK_STATUS_BUDGET = 5,
  TK_STATUS_UNSUPPORTED = 6,
  TK_STATUS_NO_GRAPH = 7,
  TK_STATUS_INTERNAL = 8,
} TkStatus;

// Opaque switching-function family.
typedef struct TkCutoff TkCutoff;

// Opaque thermal parameter set.
typedef struct TkParams TkParams;

// Value with its error estimate.
typedef struct TkEstimate {
  double re;
  double im;
  double error;
} TkEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length in bytes, or 0 if no
// error has been recorded.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t tk_last_error(char *buf, size_t len);

// Create a parameter set with unit coupling and `c = 0`.
//
// # Safety
// `out` must be valid for writing a pointer.
enum TkStatus tk_params_new(double beta, double mass, struct TkParams **out);

// Set the coupling and the renormalization constant `c`.
//
// # Safety
// `params` must come from [`tk_params_new`] and not be freed.
enum TkStatus tk_params_set(struct TkParams *params, double coupling, double renorm_c);

// # Safety
// `params` must be null or come from [`tk_params_new`], and is invalid afterwards.
void tk_params_free(struct TkParams *params);

// Create a cutoff family with ramp width `epsilon`, plateau start `t0` and
// dilation `scale_n`.
//
// # Safety
// `out` must be valid for writing a pointer.
enum TkStatus tk_cutoff_new(enum TkCutoffKind kind,
                            double epsilon,
                            double t0,
                            double scale_n,
                            struct TkCutoff **out);

// # Safety
// `cutoff` must be null or come from [`tk_cutoff_new`], and is invalid afterwards.
void tk_cutoff_free(struct TkCutoff *cutoff);

// Thermal Wightman function at `(t, u)`, `u ∈ [-β, 0]`, spatial momentum `p`.
//
// # Safety
// Pointers must be valid; `out` is written only on success.
enum TkStatus tk_wightman(const struct TkParams *params,
                          double t,
                          double u,
                          double p,
                          struct TkEstimate *out);

// Thermal propagator at `(t, u)`, `u ∈ (-β, β)`.
//
// # Safety
// Pointers must be valid; `out` is written only on success.
enum TkStatus tk_thermal(const struct TkParams *params,
                         double t,
                         double u,
                         double p,
                         struct TkEstimate *out);

// Closed form of the Matsubara sum `Σ e^{iνu}/(ω² + ν²)` on `u ∈ [0, β]`.
//
// # Safety
// Pointers must be valid.
enum TkStatus tk_matsubara_sum_closed(const struct TkParams *params,
                                      double u,
                                      double p,
                                      double *out);

// Large-time first-order correction of the quadratic perturbation at equal times.
//
// # Safety
// Pointers must be valid.
enum TkStatus tk_phi2_f1(const struct TkParams *params, double p, double *out);

// Thermal mass `m_β²`.
//
// # Safety
// Pointers must be valid.
enum TkStatus tk_thermal_mass(const struct TkParams *params, struct TkEstimate *out);

// Second-order large-time correction of the cubic perturbation at `p = 0`, `dt = 0`.
//
// # Safety
// Pointers must be valid.
enum TkStatus tk_phi3_f2(const struct TkParams *params,
                         const struct TkCutoff *cutoff,
                         struct TkEstimate *out);

// Number of connected multigraphs without self-loops on vertices of the
// given degrees, and the sum of their inverse symmetry factors.
//
// # Safety
// `degrees` must be valid for `len` reads; the out-pointers must be valid.
enum TkStatus tk_count_graphs(const uint32_t *degrees,
                              size_t len,
                              size_t *out_count,
                              double *out_weight);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THERMAL_KMS_H */
