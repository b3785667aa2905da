#ifndef SPEECHGATE_H
#define SPEECHGATE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes of every fallible call.
typedef enum SgStatus {
  SG_STATUS_OK = 0,
  SG_STATUS_NULL_POINTER = 1,
  SG_STATUS_INVALID_UTF8 = 2,
  SG_STATUS_PARSE = 3,
  SG_STATUS_VALIDATION = 4,
  SG_STATUS_SHAPE = 5,
  SG_STATUS_CHECKPOINT = 6,
  SG_STATUS_IO = 7,
  SG_STATUS_NON_FINITE = 8,
  SG_STATUS_BUFFER_TOO_SMALL = 9,
  SG_STATUS_PANIC = 10,
} SgStatus;

// A loaded word-vector table.
typedef struct SgEmbeddings SgEmbeddings;

// A loaded checkpoint.
typedef struct SgModel SgModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *sg_version(void);

// Message of the last failed call on this thread. Valid until the next
// failing call on the same thread; empty when nothing has failed.
const char *sg_last_error(void);

// Loads a checkpoint file into `*out`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum SgStatus sg_model_load(const char *path, struct SgModel **out);

// Loads a checkpoint from memory into `*out`.
//
// # Safety
// `data` must point to `len` readable bytes and `out` be a valid pointer.
enum SgStatus sg_model_load_bytes(const uint8_t *data, size_t len, struct SgModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from `sg_model_load*` and not be used afterwards.
void sg_model_free(struct SgModel *model);

// 1 when the model outputs a probability, 0 for MMSE regression.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum SgStatus sg_model_is_classification(const struct SgModel *model, int *out);

// Loads a whitespace-separated word-vector file into `*out`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum SgStatus sg_embeddings_load(const char *path, struct SgEmbeddings **out);

// Vector width of a loaded table.
//
// # Safety
// `emb` must be a live handle and `out` a valid pointer.
enum SgStatus sg_embeddings_dim(const struct SgEmbeddings *emb, size_t *out);

// Releases an embedding table. Null is ignored.
//
// # Safety
// `emb` must come from `sg_embeddings_load` and not be used afterwards.
void sg_embeddings_free(struct SgEmbeddings *emb);

// Scores one session. `frames_csv` is required by audio, fused and late
// models; `asr_json`, `patient_speaker` and `emb` by text, fused and late
// models. Unused inputs may be null. `*out_label` is 0/1 for
// classification and -1 for regression.
//
// # Safety
// String arguments must be NUL-terminated or null; handles must be live;
// `out_score` and `out_label` must be valid pointers.
enum SgStatus sg_predict_session(const struct SgModel *model,
                                 const struct SgEmbeddings *emb,
                                 const char *frames_csv,
                                 const char *asr_json,
                                 const char *patient_speaker,
                                 double *out_score,
                                 int *out_label);

// Pause before each patient word: durations in seconds and categories
// (0 none, 1 short, 2 long). With `capacity` below the word count nothing
// is written except `*out_len`, and `SG_STATUS_BUFFER_TOO_SMALL` returns.
//
// # Safety
// Strings must be NUL-terminated; `durations` and `categories` must hold
// `capacity` elements (or be null when `capacity` is 0); `out_len` valid.
enum SgStatus sg_compute_pauses(const char *asr_json,
                                const char *patient_speaker,
                                double *durations,
                                uint8_t *categories,
                                size_t capacity,
                                size_t *out_len);

// Session-level late fusion of two probabilities in [0, 1].
//
// # Safety
// `out` must be a valid pointer.
enum SgStatus sg_late_fuse(double p_audio, double p_text, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPEECHGATE_H */
