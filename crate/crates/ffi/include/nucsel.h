#ifndef NUCSEL_H
#define NUCSEL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Flag set when the paired differences carry no spread.
typedef enum NucselDegenerate {
  NUCSEL_DEGENERATE_NONE = 0,
  NUCSEL_DEGENERATE_NO_DIFFERENCE = 1,
  NUCSEL_DEGENERATE_ZERO_VARIANCE = 2,
} NucselDegenerate;

typedef enum NucselMatch {
  NUCSEL_MATCH_JACCARD = 0,
  NUCSEL_MATCH_INTERSECTION = 1,
} NucselMatch;

typedef enum NucselStatus {
  NUCSEL_STATUS_OK = 0,
  NUCSEL_STATUS_NULL_POINTER = 1,
  NUCSEL_STATUS_INVALID_ARGUMENT = 2,
  NUCSEL_STATUS_IO = 3,
  NUCSEL_STATUS_FORMAT = 4,
  NUCSEL_STATUS_COMPUTATION = 5,
  NUCSEL_STATUS_PANIC = 6,
} NucselStatus;

// Opaque bank of nucleus shapes.
typedef struct NucselBank NucselBank;

// Opaque instance mask.
typedef struct NucselMask NucselMask;

typedef struct NucselTTest {
  uintptr_t n;
  double mean_diff;
  double sd_diff;
  double t;
  double df;
  double p;
  enum NucselDegenerate degenerate;
} NucselTTest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *nucsel_version(void);

// Copy of the calling thread's last error message, or NULL if the last
// call succeeded. Release with `nucsel_string_free`.
char *nucsel_last_error_message(void);

// # Safety
// `s` must come from this library or be NULL.
void nucsel_string_free(char *s);

// Mask from `width * height` row-major labels; ids are kept as given.
//
// # Safety
// `labels` must point to `width * height` readable values.
enum NucselStatus nucsel_mask_new(uint32_t width,
                                  uint32_t height,
                                  const uint16_t *labels,
                                  struct NucselMask **out);

// Load a 16-bit (or 8-bit) label PNG; ids are relabelled to `1..=N`.
//
// # Safety
// `path` must be a NUL-terminated string.
enum NucselStatus nucsel_mask_load(const char *path, struct NucselMask **out);

// Write a 16-bit label PNG plus its JSON sidecar.
//
// # Safety
// `mask` must be a live handle and `path` a NUL-terminated string.
enum NucselStatus nucsel_mask_save(const struct NucselMask *mask, const char *path);

// # Safety
// `mask` must come from this library or be NULL.
void nucsel_mask_free(struct NucselMask *mask);

// # Safety
// `mask` must be a live handle or NULL (returns 0).
uint32_t nucsel_mask_width(const struct NucselMask *mask);

// # Safety
// `mask` must be a live handle or NULL (returns 0).
uint32_t nucsel_mask_height(const struct NucselMask *mask);

// # Safety
// `mask` must be a live handle or NULL (returns 0).
uintptr_t nucsel_mask_instance_count(const struct NucselMask *mask);

// Copy the labels into `buf`, which must hold `width * height` values.
//
// # Safety
// `buf` must be writable for `len` values.
enum NucselStatus nucsel_mask_copy_labels(const struct NucselMask *mask,
                                          uint16_t *buf,
                                          uintptr_t len);

// Aggregated Jaccard index of `pred` against `gt`.
//
// # Safety
// Handles must be live; `out` must be writable.
enum NucselStatus nucsel_aji(const struct NucselMask *gt,
                             const struct NucselMask *pred,
                             enum NucselMatch criterion,
                             double *out);

// Foreground Dice coefficient.
//
// # Safety
// Handles must be live; `out` must be writable.
enum NucselStatus nucsel_dice(const struct NucselMask *gt,
                              const struct NucselMask *pred,
                              double *out);

// Two-sided paired t-test on `n` pairs.
//
// # Safety
// `a` and `b` must hold `n` values; `out` must be writable.
enum NucselStatus nucsel_paired_ttest(const double *a,
                                      const double *b,
                                      uintptr_t n,
                                      struct NucselTTest *out);

// Shape bank from an annotated mask. `random_crops` extra cropped copies
// are drawn with `seed`.
//
// # Safety
// `mask` must be a live handle; `out` must be writable.
enum NucselStatus nucsel_bank_build(const struct NucselMask *mask,
                                    bool flips,
                                    bool rotations,
                                    uintptr_t random_crops,
                                    uint64_t seed,
                                    struct NucselBank **out);

// # Safety
// `bank` must be a live handle or NULL (returns 0).
uintptr_t nucsel_bank_len(const struct NucselBank *bank);

// # Safety
// `bank` must come from this library or be NULL.
void nucsel_bank_free(struct NucselBank *bank);

// Synthesize one `size`x`size` mask on a `canvas`x`canvas` canvas.
// A negative `q` draws the nucleus count from the source density.
//
// # Safety
// `bank` must be a live handle; `out` must be writable.
enum NucselStatus nucsel_synthesize(const struct NucselBank *bank,
                                    int64_t q,
                                    uint32_t canvas,
                                    uint32_t size,
                                    uint64_t seed,
                                    struct NucselMask **out);

// Run every configured stage from a JSON config file.
//
// # Safety
// `config_path` must be a NUL-terminated string.
enum NucselStatus nucsel_run_pipeline(const char *config_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NUCSEL_H */
