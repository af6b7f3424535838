#ifndef FDGEN_H
#define FDGEN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum FdgenStatus {
  FDGEN_STATUS_OK = 0,
  FDGEN_STATUS_NULL_POINTER = 1,
  FDGEN_STATUS_INVALID_ARGUMENT = 2,
  FDGEN_STATUS_DIMENSION_MISMATCH = 3,
  FDGEN_STATUS_BUFFER_TOO_SMALL = 4,
  FDGEN_STATUS_CONFIG = 5,
  FDGEN_STATUS_CHECKPOINT = 6,
  FDGEN_STATUS_ENVIRONMENT_TOO_SPARSE = 7,
  FDGEN_STATUS_IO = 8,
  FDGEN_STATUS_NUMERICAL = 9,
  FDGEN_STATUS_PANIC = 10,
} FdgenStatus;

// Feasibility environment.
typedef struct FdgenEnv FdgenEnv;

// Gaussian kernel density estimate.
typedef struct FdgenKde FdgenKde;

// Trained actor together with its configuration.
typedef struct FdgenModel FdgenModel;

// One environment state.
typedef struct FdgenState FdgenState;

// Training session.
typedef struct FdgenTrainer FdgenTrainer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *fdgen_version(void);

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next call into the library from this thread.
const char *fdgen_last_error(void);

// Creates an environment: `"bimodal1d"`, `"rings2d"` or `"grasp2d"`.
//
// # Safety
// `kind` must be a NUL-terminated string; `out` must be writable.
enum FdgenStatus fdgen_env_new(const char *kind, struct FdgenEnv **out);

// # Safety
// `env` must be NULL or a handle from `fdgen_env_new`, freed once.
void fdgen_env_free(struct FdgenEnv *env);

// State feature length and action length (the same for raw and
// normalized actions).
//
// # Safety
// `env` must be a live handle; outputs must be writable.
enum FdgenStatus fdgen_env_dims(const struct FdgenEnv *env, size_t *state_dim, size_t *action_dim);

// Draws a random state from a seed.
//
// # Safety
// `env` must be a live handle; `out` must be writable.
enum FdgenStatus fdgen_env_sample_state(const struct FdgenEnv *env,
                                        uint64_t seed,
                                        struct FdgenState **out);

// Canonical state of a grasp shape (`"H"`, `"T"`, ...); toy environments
// ignore the shape.
//
// # Safety
// `env` must be a live handle, `shape` NUL-terminated, `out` writable.
enum FdgenStatus fdgen_env_canonical_state(const struct FdgenEnv *env,
                                           const char *shape,
                                           struct FdgenState **out);

// # Safety
// `state` must be NULL or a state handle, freed once.
void fdgen_state_free(struct FdgenState *state);

// Copies the state's feature vector. `written` receives the required
// length even when `len` is too small.
//
// # Safety
// `buf` must hold `len` doubles; `written` must be writable.
enum FdgenStatus fdgen_state_features(const struct FdgenState *state,
                                      double *buf,
                                      size_t len,
                                      size_t *written);

// Feasibility of a normalized action of length `action_dim`.
//
// # Safety
// Handles must be live; `action` must hold `len` doubles.
enum FdgenStatus fdgen_env_evaluate(const struct FdgenEnv *env,
                                    const struct FdgenState *state,
                                    const double *action,
                                    size_t len,
                                    bool *feasible);

// Feasibility of a raw actor output: positions are clipped into bounds
// and grasp angles normalized. Actions at the radius singularity fail.
//
// # Safety
// Handles must be live; `action` must hold `len` doubles.
enum FdgenStatus fdgen_env_evaluate_raw(const struct FdgenEnv *env,
                                        const struct FdgenState *state,
                                        const double *action,
                                        size_t len,
                                        bool *feasible);

// Number of connected feasible regions on a `gx x gy x ga` grid, and the
// feasible cell fraction.
//
// # Safety
// Handles must be live; outputs must be writable.
enum FdgenStatus fdgen_env_mode_count(const struct FdgenEnv *env,
                                      const struct FdgenState *state,
                                      size_t gx,
                                      size_t gy,
                                      size_t ga,
                                      size_t *modes,
                                      double *feasible_fraction);

// KDE over `n` supports of dimension `dim` (row-major `n * dim`) with a
// per-dimension bandwidth of length `dim`.
//
// # Safety
// `supports` must hold `n * dim` doubles and `bandwidth` `dim` doubles.
enum FdgenStatus fdgen_kde_new(const double *supports,
                               size_t n,
                               size_t dim,
                               const double *bandwidth,
                               struct FdgenKde **out);

// # Safety
// `kde` must be NULL or a KDE handle, freed once.
void fdgen_kde_free(struct FdgenKde *kde);

// Log densities of `m` queries (row-major `m * dim`) into `out[m]`.
//
// # Safety
// Buffers must hold the stated number of doubles.
enum FdgenStatus fdgen_kde_log_eval(const struct FdgenKde *kde,
                                    const double *queries,
                                    size_t m,
                                    double *out);

// Gradient of `log q(query)` with respect to every support, `n * dim`.
//
// # Safety
// `query` must hold `dim` doubles and `out` `n * dim` doubles.
enum FdgenStatus fdgen_kde_grad_supports(const struct FdgenKde *kde,
                                         const double *query,
                                         double *out);

// Draws `m` perturbed copies of every support using the given seed.
// Support `i` owns rows `[m * i, m * (i + 1))` of the row-major
// `n * m * dim` output.
//
// # Safety
// `out` must hold `n * m * dim` doubles.
enum FdgenStatus fdgen_kde_sample(const struct FdgenKde *kde, size_t m, uint64_t seed, double *out);

// Loads the actor from a checkpoint file.
//
// # Safety
// `path` must be NUL-terminated; `out` writable.
enum FdgenStatus fdgen_model_load(const char *path, struct FdgenModel **out);

// Loads the actor from checkpoint bytes in memory.
//
// # Safety
// `bytes` must hold `len` bytes; `out` writable.
enum FdgenStatus fdgen_model_from_bytes(const uint8_t *bytes, size_t len, struct FdgenModel **out);

// # Safety
// `model` must be NULL or a model handle, freed once.
void fdgen_model_free(struct FdgenModel *model);

// New handle to the model's environment (for states and evaluation).
//
// # Safety
// `model` must be live; `out` writable.
enum FdgenStatus fdgen_model_env(const struct FdgenModel *model, struct FdgenEnv **out);

// Samples `count` raw actions (row-major `count * action_dim`).
//
// # Safety
// Handles must be live; `out` must hold `count * action_dim` doubles.
enum FdgenStatus fdgen_model_sample(const struct FdgenModel *model,
                                    const struct FdgenState *state,
                                    size_t count,
                                    uint64_t seed,
                                    double *out);

// Accuracy and least-mode share (minimum over shape groups) over `states`
// random states with `actions` actions each, after rejecting the
// `action_opt` fraction of lowest-density actions.
//
// # Safety
// `model` must be live; outputs writable.
enum FdgenStatus fdgen_model_evaluate(const struct FdgenModel *model,
                                      size_t states,
                                      size_t actions,
                                      double action_opt,
                                      uint64_t seed,
                                      double *accuracy,
                                      double *least_mode);

// Starts a training session from `key = value` config text (empty for
// defaults) and fills the replay memory.
//
// # Safety
// `config` must be NUL-terminated; `out` writable.
enum FdgenStatus fdgen_trainer_new(const char *config, struct FdgenTrainer **out);

// # Safety
// `trainer` must be NULL or a trainer handle, freed once.
void fdgen_trainer_free(struct FdgenTrainer *trainer);

// Runs `steps` outer training steps; `divergence` receives the last
// logged divergence estimate (NaN when none was available).
//
// # Safety
// `trainer` must be live; `divergence` may be NULL.
enum FdgenStatus fdgen_trainer_run(struct FdgenTrainer *trainer,
                                   uint64_t steps,
                                   double *divergence);

// Completed outer steps.
//
// # Safety
// `trainer` must be live; `out` writable.
enum FdgenStatus fdgen_trainer_steps(const struct FdgenTrainer *trainer, uint64_t *out);

// Writes a checkpoint file.
//
// # Safety
// `trainer` must be live; `path` NUL-terminated.
enum FdgenStatus fdgen_trainer_save(const struct FdgenTrainer *trainer, const char *path);

// Snapshot of the current actor as a model handle.
//
// # Safety
// `trainer` must be live; `out` writable.
enum FdgenStatus fdgen_trainer_model(const struct FdgenTrainer *trainer, struct FdgenModel **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FDGEN_H */
