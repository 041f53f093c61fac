#ifndef PRIVTEXT_H
#define PRIVTEXT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PtStatus {
  PT_STATUS_OK = 0,
  PT_STATUS_NULL_POINTER = 1,
  PT_STATUS_INVALID_ARGUMENT = 2,
  PT_STATUS_IO = 3,
  PT_STATUS_PARSE = 4,
  PT_STATUS_CONFIG = 5,
  PT_STATUS_CALIBRATION = 6,
  PT_STATUS_NON_FINITE = 7,
  PT_STATUS_DIMENSION_MISMATCH = 8,
  PT_STATUS_CHECKPOINT = 9,
  /*
   A run finished but broke a run-time contract (epsilon overshoot or nondeterminism).
   */
  PT_STATUS_INVARIANT = 10,
  PT_STATUS_PANIC = 99,
} PtStatus;

/*
 Opaque RDP accountant.
 */
typedef struct PtAccountant PtAccountant;

/*
 Opaque trained model: configuration plus parameters.
 */
typedef struct PtModel PtModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread, or null if there was none.
 The pointer stays valid until the next failing call on the same thread.
 */
const char *pt_last_error_message(void);

void pt_clear_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *pt_version(void);

/*
 RDP of one subsampled Gaussian step at integer order `alpha`.
 */
enum PtStatus pt_rdp_subsampled_gaussian(double q, double sigma, uint32_t alpha, double *out);

/*
 Noise multiplier meeting `(epsilon, delta)` for `steps` steps at sample rate `q`.
 */
enum PtStatus pt_calibrate_sigma(double epsilon,
                                 double delta,
                                 double q,
                                 uint64_t steps,
                                 double *out_sigma,
                                 double *out_epsilon);

struct PtAccountant *pt_accountant_new(void);

/*
 Adds `steps` steps of the subsampled Gaussian at `(q, sigma)`.
 */
enum PtStatus pt_accountant_compose(struct PtAccountant *acc,
                                    double q,
                                    double sigma,
                                    uint64_t steps);

/*
 Current epsilon at `delta` and the order that attains it.
 */
enum PtStatus pt_accountant_epsilon(const struct PtAccountant *acc,
                                    double delta,
                                    double *out_epsilon,
                                    uint32_t *out_order);

uint64_t pt_accountant_steps(const struct PtAccountant *acc);

void pt_accountant_free(struct PtAccountant *acc);

/*
 Writes `grad * min(1, clip_norm / ||grad||)` to `out` (may alias `grad`).
 */
enum PtStatus pt_clip(const double *grad, uintptr_t len, double clip_norm, double *out);

/*
 Example-count weighted average of `n_clients` parameter vectors stored
 row-major in `params` (`n_clients * dim` values). Row `i` belongs to
 client `i` and carries weight `example_counts[i]`.
 */
enum PtStatus pt_aggregate(const double *params,
                           const uint64_t *example_counts,
                           uintptr_t n_clients,
                           uintptr_t dim,
                           double *out);

/*
 Loads a checkpoint written by `privtext`.
 */
enum PtStatus pt_model_load(const char *path, struct PtModel **out);

uintptr_t pt_model_param_count(const struct PtModel *model);

/*
 Writes negative, neutral and positive probabilities for `text` to `out[0..3]`.
 */
enum PtStatus pt_model_predict_proba(const struct PtModel *model, const char *text, double *out);

void pt_model_free(struct PtModel *model);

/*
 Runs the experiment in the TOML file at `config_path` and writes the
 result files into `out_dir`. `threads = 0` uses one thread per core.
 Returns `PT_STATUS_INVARIANT` if the grid ran but a contract check failed.
 */
enum PtStatus pt_run_experiment(const char *config_path, const char *out_dir, uint32_t threads);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRIVTEXT_H */
