#ifndef REACTGEN_H
#define REACTGEN_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; configuration, data and numeric failures share their values with the CLI exit codes.
 */
typedef enum RfStatus {
  RF_STATUS_OK = 0,
  RF_STATUS_NULL_POINTER = 1,
  RF_STATUS_CONFIG = 2,
  RF_STATUS_DATA = 3,
  RF_STATUS_NUMERIC = 4,
  RF_STATUS_BUFFER_SIZE = 5,
  RF_STATUS_PANIC = 6,
} RfStatus;

/**
 * Trained generator: configuration plus parameters.
 */
typedef struct RfModel RfModel;

/**
 * One loaded dyadic session.
 */
typedef struct RfSession RfSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next failing call.
 */
const char *rf_last_error_message(void);

/**
 * Loads a model from a checkpoint. `config_path` may be null for the default configuration.
 *
 * # Safety
 * Path arguments must be null or NUL-terminated strings; `out` must be writable.
 */
enum RfStatus rf_model_load(const char *config_path,
                            const char *checkpoint_path,
                            struct RfModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`rf_model_load`] not yet freed.
 */
void rf_model_free(struct RfModel *model);

/**
 * Reads the session `id` from a directory of session files.
 *
 * # Safety
 * `dir` and `id` must be NUL-terminated strings; `out` must be writable.
 */
enum RfStatus rf_session_load(const char *dir, const char *id, struct RfSession **out);

/**
 * # Safety
 * `session` must be null or a handle from [`rf_session_load`] not yet freed.
 */
void rf_session_free(struct RfSession *session);

/**
 * Frame count `T` and coefficient width `D` of a session.
 *
 * # Safety
 * `session` must be a live handle; `frames` and `coeff_dim` must be writable.
 */
enum RfStatus rf_session_dims(const struct RfSession *session, size_t *frames, size_t *coeff_dim);

/**
 * Generates one listener reaction (`T x D`, row-major) for a loaded session.
 *
 * # Safety
 * Handles must be live; `out` must hold `out_len` floats.
 */
enum RfStatus rf_generate(const struct RfModel *model,
                          const struct RfSession *session,
                          uint64_t seed,
                          float *out,
                          size_t out_len);

/**
 * Generates from caller-owned speaker coefficients (`frames x D`) and speech
 * features (`k*frames x d_a`).
 *
 * # Safety
 * `speaker`, `audio` and `out` must hold the documented number of floats.
 */
enum RfStatus rf_generate_buffers(const struct RfModel *model,
                                  const float *speaker,
                                  const float *audio,
                                  size_t frames,
                                  uint64_t seed,
                                  float *out,
                                  size_t out_len);

/**
 * Face-stream alignment bias (`tq x tk`, row-major; masked entries are `-inf`).
 *
 * # Safety
 * `out` must hold `out_len` doubles.
 */
enum RfStatus rf_build_vim_bias(size_t tq, size_t tk, size_t p, double *out, size_t out_len);

/**
 * Speech-stream alignment bias (`tq x tk` with `tk = k*tq`).
 *
 * # Safety
 * `out` must hold `out_len` doubles.
 */
enum RfStatus rf_build_mim_bias(size_t tq,
                                size_t tk,
                                size_t k,
                                size_t p,
                                double *out,
                                size_t out_len);

/**
 * Synchrony lag between two `frames x dims` sequences.
 *
 * # Safety
 * `speaker` and `pred` must hold `frames*dims` floats; `out` must be writable.
 */
enum RfStatus rf_tlcc(const float *speaker,
                      const float *pred,
                      size_t frames,
                      size_t dims,
                      size_t max_lag,
                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REACTGEN_H */
