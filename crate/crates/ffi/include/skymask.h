#ifndef SKYMASK_H
#define SKYMASK_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by every fallible function.
typedef enum SkymaskStatus {
  SKYMASK_STATUS_OK = 0,
  SKYMASK_STATUS_NULL_POINTER = 1,
  SKYMASK_STATUS_INVALID_ARGUMENT = 2,
  SKYMASK_STATUS_NOT_FOUND = 3,
  SKYMASK_STATUS_IO = 4,
  SKYMASK_STATUS_UNSUPPORTED_FORMAT = 5,
  SKYMASK_STATUS_CORRUPT_DATA = 6,
  SKYMASK_STATUS_SEGMENTATION = 7,
  SKYMASK_STATUS_EVALUATION = 8,
  SKYMASK_STATUS_MODEL = 9,
  SKYMASK_STATUS_BUFFER_TOO_SMALL = 10,
  SKYMASK_STATUS_PANIC = 11,
} SkymaskStatus;

// Decoded RGB image.
typedef struct SkymaskImage SkymaskImage;

// Trained one-vs-rest linear model.
typedef struct SkymaskModel SkymaskModel;

// Superpixel label map.
typedef struct SkymaskSegmentation SkymaskSegmentation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread, or NULL after a
// successful call. Valid until the next skymask call on the same thread.
const char *skymask_last_error(void);

// Library version as a static NUL-terminated string.
const char *skymask_version(void);

// Decodes a PNG or JPEG file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SkymaskStatus skymask_image_load(const char *path, struct SkymaskImage **out);

// Wraps a copy of `len` bytes of interleaved 8-bit RGB, row-major.
//
// # Safety
// `rgb` must point to `len` readable bytes; `out` must be writable.
enum SkymaskStatus skymask_image_new(uint32_t width,
                                     uint32_t height,
                                     const uint8_t *rgb,
                                     size_t len,
                                     struct SkymaskImage **out);

// Writes the image as PNG.
//
// # Safety
// `img` must come from this library; `path` must be NUL-terminated.
enum SkymaskStatus skymask_image_save(const struct SkymaskImage *img, const char *path);

// # Safety
// `img` must be NULL or a live handle from this library.
uint32_t skymask_image_width(const struct SkymaskImage *img);

// # Safety
// `img` must be NULL or a live handle from this library.
uint32_t skymask_image_height(const struct SkymaskImage *img);

// Borrowed pointer to the interleaved RGB bytes; `len` receives the byte
// count. Valid until the image is freed.
//
// # Safety
// `img` must be NULL or a live handle; `len` must be NULL or writable.
const uint8_t *skymask_image_data(const struct SkymaskImage *img, size_t *len);

// # Safety
// `img` must be NULL or a handle not yet freed.
void skymask_image_free(struct SkymaskImage *img);

// SLIC superpixels with connectivity enforcement and the default
// iteration budget.
//
// # Safety
// `img` must be a live handle; `out` must be writable.
enum SkymaskStatus skymask_segment(const struct SkymaskImage *img,
                                   uint32_t target_count,
                                   double compactness,
                                   struct SkymaskSegmentation **out);

// # Safety
// `seg` must be NULL or a live handle.
size_t skymask_segmentation_count(const struct SkymaskSegmentation *seg);

// Borrowed row-major label array with `width * height` entries, labels in
// `0..count`.
//
// # Safety
// `seg` must be NULL or a live handle; `len` must be NULL or writable.
const uint32_t *skymask_segmentation_labels(const struct SkymaskSegmentation *seg, size_t *len);

// # Safety
// `seg` must be NULL or a handle not yet freed.
void skymask_segmentation_free(struct SkymaskSegmentation *seg);

// Paints superpixel boundaries in `r,g,b` onto a copy of `img`.
// `target_count == 0` returns an unchanged copy.
//
// # Safety
// `img` must be a live handle; `out` must be writable.
enum SkymaskStatus skymask_augment(const struct SkymaskImage *img,
                                   uint32_t target_count,
                                   uint8_t r,
                                   uint8_t g,
                                   uint8_t b,
                                   double compactness,
                                   struct SkymaskImage **out);

// Joint RGB histogram with `bins^3` cells, written into `out`.
//
// # Safety
// `img` must be a live handle; `out` must have room for `out_len` doubles.
enum SkymaskStatus skymask_color_histogram(const struct SkymaskImage *img,
                                           size_t bins_per_channel,
                                           double *out,
                                           size_t out_len);

// Non-interpolated average precision of a ranking. `is_positive[i]` is
// nonzero for positives; equal scores keep input order.
//
// # Safety
// `scores` and `is_positive` must each hold `n` elements; `out` writable.
enum SkymaskStatus skymask_average_precision(const double *scores,
                                             const uint8_t *is_positive,
                                             size_t n,
                                             double *out);

// Loads a model JSON written by `skymask train`.
//
// # Safety
// `path` must be NUL-terminated; `out` must be writable.
enum SkymaskStatus skymask_model_load(const char *path, struct SkymaskModel **out);

// # Safety
// `model` must be NULL or a live handle.
size_t skymask_model_dimension(const struct SkymaskModel *model);

// `w . x + b` for a feature vector of `n` values.
//
// # Safety
// `model` must be a live handle; `x` must hold `n` doubles; `out` writable.
enum SkymaskStatus skymask_model_score(const struct SkymaskModel *model,
                                       const double *x,
                                       size_t n,
                                       double *out);

// # Safety
// `model` must be NULL or a handle not yet freed.
void skymask_model_free(struct SkymaskModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SKYMASK_H */
