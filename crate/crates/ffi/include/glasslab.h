#ifndef GLASSLAB_H
#define GLASSLAB_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum {
  GLASSLAB_STATUS_OK = 0,
  GLASSLAB_STATUS_NULL_POINTER = 1,
  GLASSLAB_STATUS_INVALID_UTF8 = 2,
  GLASSLAB_STATUS_INVALID_PARAMETER = 3,
  GLASSLAB_STATUS_DOMAIN_MISMATCH = 4,
  GLASSLAB_STATUS_DIMENSION_MISMATCH = 5,
  GLASSLAB_STATUS_UNSUPPORTED = 6,
  GLASSLAB_STATUS_TOO_LARGE = 7,
  GLASSLAB_STATUS_SOLVER = 8,
  GLASSLAB_STATUS_CONFIG = 9,
  GLASSLAB_STATUS_TOO_MANY_FAILURES = 10,
  GLASSLAB_STATUS_IO = 11,
  GLASSLAB_STATUS_PANIC = 12,
  GLASSLAB_STATUS_BUFFER_TOO_SMALL = 13,
} GlasslabStatus;

/**
 * One disorder realisation.
 */
typedef struct GlasslabDisorder GlasslabDisorder;

/**
 * Exact Gibbs summary of one disorder.
 */
typedef struct GlasslabExact GlasslabExact;

/**
 * Model specification.
 */
typedef struct GlasslabModel GlasslabModel;

/**
 * Replica-symmetric fixed point.
 */
typedef struct GlasslabRs GlasslabRs;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next glasslab call on the same thread.
 */
const char *glasslab_last_error(void);

/**
 * Library version, a static string.
 */
const char *glasslab_version(void);

/**
 * 256-bit stream key for `(master_seed, disorder_index, role)`.
 *
 * # Safety
 * `out` must point to 32 writable bytes.
 */
GlasslabStatus glasslab_seed_stream(uint64_t master_seed,
                                    uint64_t disorder_index,
                                    uint8_t role,
                                    uint8_t *out);

/**
 * SK model; `kind` is 1 for ±1 spins and 2 for box spins.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
GlasslabStatus glasslab_model_sk(uint32_t kind, double beta, double h, GlasslabModel **out);

/**
 * Model from `key = value` lines, as in experiment configs.
 *
 * # Safety
 * `spec` must be a NUL-terminated string and `out` a valid handle slot.
 */
GlasslabStatus glasslab_model_parse(const char *spec, GlasslabModel **out);

/**
 * Numeric kind code of a model (1 SK, 2 SK box, 3 perceptron, 4 ST).
 *
 * # Safety
 * `model` must be a live handle or null.
 */
uint32_t glasslab_model_kind(const GlasslabModel *model);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void glasslab_model_free(GlasslabModel *model);

/**
 * Disorder `index` of the sweep with `master_seed`, on `n` sites.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid handle slot.
 */
GlasslabStatus glasslab_disorder_sample(const GlasslabModel *model,
                                        uintptr_t n,
                                        uint64_t master_seed,
                                        uint64_t index,
                                        GlasslabDisorder **out);

/**
 * # Safety
 * `disorder` must come from this library and not be used afterwards.
 */
void glasslab_disorder_free(GlasslabDisorder *disorder);

/**
 * Exact enumeration with the first `k` sites' joint law.
 *
 * # Safety
 * Handles must be live and `out` a valid handle slot.
 */
GlasslabStatus glasslab_exact_enumerate(const GlasslabModel *model,
                                        const GlasslabDisorder *disorder,
                                        uintptr_t k,
                                        GlasslabExact **out);

/**
 * # Safety
 * `exact` must be live and `out` writable.
 */
GlasslabStatus glasslab_exact_log_partition(const GlasslabExact *exact, double *out);

/**
 * Site means `⟨x_i⟩`, `N` entries.
 *
 * # Safety
 * `buf` must hold `cap` doubles; `len` may be null.
 */
GlasslabStatus glasslab_exact_site_means(const GlasslabExact *exact,
                                         double *buf,
                                         uintptr_t cap,
                                         uintptr_t *len);

/**
 * The `2^k` probabilities of the first `k` sites; site 1 is the most
 * significant bit and a set bit means `+1`.
 *
 * # Safety
 * `buf` must hold `cap` doubles; `len` may be null.
 */
GlasslabStatus glasslab_exact_marginal(const GlasslabExact *exact,
                                       double *buf,
                                       uintptr_t cap,
                                       uintptr_t *len);

/**
 * # Safety
 * `exact` must come from this library and not be used afterwards.
 */
void glasslab_exact_free(GlasslabExact *exact);

/**
 * Replica-symmetric solution for `model` at size `n` (`n` sets the
 * constraint ratio of Gardner models). `quad_order` 0 picks the default.
 *
 * # Safety
 * `model` must be live and `out` a valid handle slot.
 */
GlasslabStatus glasslab_rs_solve(const GlasslabModel *model,
                                 uintptr_t n,
                                 uintptr_t quad_order,
                                 GlasslabRs **out);

/**
 * Named order parameter, e.g. `q`, `r`, `sigma`.
 *
 * # Safety
 * `rs` must be live, `name` NUL-terminated and `out` writable.
 */
GlasslabStatus glasslab_rs_param(const GlasslabRs *rs, const char *name, double *out);

/**
 * Sup-norm fixed-point residual of the solution.
 *
 * # Safety
 * `rs` must be live and `out` writable.
 */
GlasslabStatus glasslab_rs_residual(const GlasslabRs *rs, double *out);

/**
 * # Safety
 * `rs` must come from this library and not be used afterwards.
 */
void glasslab_rs_free(GlasslabRs *rs);

/**
 * Runs an experiment (`rs-solve`, `li-sweep`, `concentration`,
 * `decompose-gap` or `projection`) from config text into `out_dir`.
 * `workers` 0 uses the default pool size.
 *
 * # Safety
 * Strings must be NUL-terminated.
 */
GlasslabStatus glasslab_run_experiment(const char *experiment,
                                       const char *config,
                                       const char *out_dir,
                                       uintptr_t workers);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GLASSLAB_H */
