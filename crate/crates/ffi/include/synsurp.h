#ifndef SYNSURP_H
#define SYNSURP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SynsurpStatus {
  SYNSURP_STATUS_OK = 0,
  SYNSURP_STATUS_NULL_POINTER = 1,
  SYNSURP_STATUS_INVALID_ARGUMENT = 2,
  SYNSURP_STATUS_IO = 3,
  SYNSURP_STATUS_FORMAT = 4,
  SYNSURP_STATUS_INCOMPATIBLE = 5,
  SYNSURP_STATUS_SEARCH = 6,
  SYNSURP_STATUS_NUMERIC = 7,
  SYNSURP_STATUS_INTERNAL = 8,
} SynsurpStatus;

// Which surprisal series to read from a profile.
typedef enum SynsurpKind {
  SYNSURP_KIND_SYNTACTIC = 0,
  SYNSURP_KIND_FULL = 1,
  SYNSURP_KIND_LEXICAL = 2,
} SynsurpKind;

// A trained parser with its vocabulary.
typedef struct SynsurpModel SynsurpModel;

// Per-word surprisal for a text at one or more k.
typedef struct SynsurpProfile SynsurpProfile;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until
// the next call into the library.
const char *synsurp_last_error(void);

// Loads a checkpoint together with the vocabulary it was trained with.
//
// # Safety
// Paths must be NUL-terminated strings; `out` must be writable.
enum SynsurpStatus synsurp_model_load(const char *checkpoint_path,
                                      const char *vocab_path,
                                      struct SynsurpModel **out);

// # Safety
// `model` must come from [`synsurp_model_load`] or be null.
void synsurp_model_free(struct SynsurpModel *model);

// Profiles `text`: one sentence per line, tokens separated by whitespace.
// `ks` must be strictly increasing; `cap` 0 keeps every path.
//
// # Safety
// `model` must be a live handle, `text` NUL-terminated, `ks` readable for
// `n_ks` values and `out` writable.
enum SynsurpStatus synsurp_profile_text(const struct SynsurpModel *model,
                                        const char *text,
                                        const uintptr_t *ks,
                                        uintptr_t n_ks,
                                        uintptr_t cap,
                                        struct SynsurpProfile **out);

// Profiles a hand-specified score table given as JSON text. Labels do not
// branch the search.
//
// # Safety
// As for [`synsurp_profile_text`].
enum SynsurpStatus synsurp_profile_table(const char *table_json,
                                         const uintptr_t *ks,
                                         uintptr_t n_ks,
                                         uintptr_t cap,
                                         struct SynsurpProfile **out);

// Number of words in a profile.
//
// # Safety
// `profile` must be a live handle or null (which yields 0).
uintptr_t synsurp_profile_len(const struct SynsurpProfile *profile);

// Copies one series (bits per word) into `buf`, which must hold
// [`synsurp_profile_len`] values.
//
// # Safety
// `profile` must be a live handle and `buf` writable for `buf_len` values.
enum SynsurpStatus synsurp_profile_values(const struct SynsurpProfile *profile,
                                          uintptr_t k,
                                          enum SynsurpKind kind,
                                          double *buf,
                                          uintptr_t buf_len);

// # Safety
// `profile` must come from a profiling call or be null.
void synsurp_profile_free(struct SynsurpProfile *profile);

// Canonical HRF sampled every `dt` seconds, peak 1. Writes the kernel
// length to `out_len`; when `buf` is null or too short only the length is
// reported and the status is `InvalidArgument` for a short buffer.
//
// # Safety
// `buf` must be writable for `buf_len` values when non-null; `out_len`
// must be writable.
enum SynsurpStatus synsurp_hrf_kernel(double dt,
                                      double *buf,
                                      uintptr_t buf_len,
                                      uintptr_t *out_len);

// Leave-one-section-out r² per voxel. `design` is `n_scans × n_columns`
// without an intercept (one is added), `y` is `n_scans × n_voxels`, and
// `sections` lists section lengths summing to `n_scans`. Writes
// `n_voxels` values to `out`.
//
// # Safety
// All arrays must be readable (or writable, for `out`) at the stated sizes.
enum SynsurpStatus synsurp_cv_r2(const double *design,
                                 uintptr_t n_scans,
                                 uintptr_t n_columns,
                                 const double *y,
                                 uintptr_t n_voxels,
                                 const uintptr_t *sections,
                                 uintptr_t n_sections,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SYNSURP_H */
