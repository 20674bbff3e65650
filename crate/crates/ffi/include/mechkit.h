#ifndef MECHKIT_H
#define MECHKIT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum MechStatus {
  MECH_STATUS_OK = 0,
  MECH_STATUS_NULL_POINTER = 1,
  MECH_STATUS_INVALID_UTF8 = 2,
  MECH_STATUS_PARSE_ERROR = 3,
  MECH_STATUS_DIMENSION_MISMATCH = 4,
  MECH_STATUS_SINGULAR_LINKAGE = 5,
  MECH_STATUS_NO_CONVERGENCE = 6,
  MECH_STATUS_QP_FAILURE = 7,
  MECH_STATUS_DOMAIN_ERROR = 8,
  MECH_STATUS_PANIC = 9,
} MechStatus;

// Passive-state estimator bound to a copy of a model.
typedef struct MechEstimator MechEstimator;

// Loaded mechanism model.
typedef struct MechModel MechModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the message of the last failure on this thread into `buf` (NUL
// terminated, truncated to `len`). Returns the full message length.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t mech_last_error(char *buf, size_t len);

// Parse a `.mech` document.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum MechStatus mech_model_load(const char *text, struct MechModel **out);

// Release a model. Null is ignored.
//
// # Safety
// `model` must come from [`mech_model_load`] and not be used afterwards.
void mech_model_free(struct MechModel *model);

// DOF count `n`, passive count `m`, velocity dimension `nv` and contact count.
//
// # Safety
// `model` must be a live handle; output pointers may be null.
enum MechStatus mech_model_dims(const struct MechModel *model,
                                size_t *n,
                                size_t *m,
                                size_t *nv,
                                size_t *contacts);

// Nominal DOF positions (length `n`).
//
// # Safety
// `model` must be a live handle and `theta` hold `n` doubles.
enum MechStatus mech_model_home(const struct MechModel *model, double *theta, size_t n);

// Close all loops for the actuated positions `qa` (length `n - m`), writing the
// full DOF vector to `theta` (length `n`). The base stays at its home pose.
//
// # Safety
// `model` must be a live handle and the arrays hold the stated lengths.
enum MechStatus mech_close(const struct MechModel *model,
                           const double *qa,
                           size_t na,
                           double *theta,
                           size_t n);

// Closure error norm at `theta`.
//
// # Safety
// `model` must be a live handle, `theta` hold `n` doubles and `error` be valid.
enum MechStatus mech_closure_error(const struct MechModel *model,
                                   const double *theta,
                                   size_t n,
                                   double *error);

// Passive rates from actuated rates, `qu_dot = J_m qa_dot`.
//
// # Safety
// `model` must be a live handle and the arrays hold the stated lengths.
enum MechStatus mech_dfk(const struct MechModel *model,
                         const double *theta,
                         size_t n,
                         const double *qa_dot,
                         size_t na,
                         double *qu_dot,
                         size_t m);

// Joint-space inertia at `theta`, column-major `nv x nv`.
//
// # Safety
// `model` must be a live handle and the arrays hold the stated lengths.
enum MechStatus mech_mass_matrix(const struct MechModel *model,
                                 const double *theta,
                                 size_t n,
                                 double *out,
                                 size_t len);

// Quasi-static contact forces (3 per model contact, ground on robot) for the
// actuator efforts `tau` at rest at `theta`.
//
// # Safety
// `model` must be a live handle and the arrays hold the stated lengths.
enum MechStatus mech_static_wrench(const struct MechModel *model,
                                   const double *theta,
                                   size_t n,
                                   const double *tau,
                                   size_t na,
                                   double *forces,
                                   size_t len);

// Ball-screw axial force for a motor torque.
double mech_ballscrew_force(double lead, double efficiency, double motor_torque);

// Create an estimator at the model's home configuration.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer. The estimator keeps
// its own copy of the model.
enum MechStatus mech_estimator_new(const struct MechModel *model,
                                   double alpha,
                                   double beta,
                                   double dt,
                                   struct MechEstimator **out);

// Feed one actuator sample; writes the estimated DOF vector and closure error norm.
//
// # Safety
// `est` must be a live handle and the arrays hold the stated lengths;
// `theta` and `error` may be null.
enum MechStatus mech_estimator_step(struct MechEstimator *est,
                                    const double *qa,
                                    const double *qa_dot,
                                    size_t na,
                                    double *theta,
                                    size_t n,
                                    double *error);

// Release an estimator. Null is ignored.
//
// # Safety
// `est` must come from [`mech_estimator_new`] and not be used afterwards.
void mech_estimator_free(struct MechEstimator *est);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MECHKIT_H */
