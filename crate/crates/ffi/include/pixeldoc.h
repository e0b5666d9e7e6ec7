#ifndef PIXELDOC_H
#define PIXELDOC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PdStatus {
  PD_STATUS_OK = 0,
  PD_STATUS_NULL_POINTER = 1,
  PD_STATUS_INVALID_ARGUMENT = 2,
  PD_STATUS_INVALID_UTF8 = 3,
  PD_STATUS_DATA_ERROR = 4,
  PD_STATUS_NUMERICAL_FAILURE = 5,
  PD_STATUS_IO = 6,
  PD_STATUS_PANIC = 7,
} PdStatus;

/**
 * A rendered document: RGB pixels, word boxes and the ground-truth text.
 */
typedef struct PdDocument PdDocument;

/**
 * A model loaded from a checkpoint.
 */
typedef struct PdModel PdModel;

typedef struct PdWordBox {
  size_t x;
  size_t y;
  size_t w;
  size_t h;
} PdWordBox;

typedef struct PdGrid {
  size_t rows;
  size_t cols;
} PdGrid;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *pd_last_error_message(void);

/**
 * Renders NUL-terminated ASCII `text` wrapped at `max_width` pixels.
 *
 * # Safety
 * `text` must be a valid C string and `out` a valid pointer.
 */
enum PdStatus pd_render_text(const char *text,
                             uint32_t style_index,
                             uint32_t font_scale,
                             size_t max_width,
                             uint64_t seed,
                             struct PdDocument **out);

/**
 * Renders a table given as JSON `{"caption": .., "header": [..], "rows": [[..]]}`.
 *
 * # Safety
 * `json` must be a valid C string and `out` a valid pointer.
 */
enum PdStatus pd_render_table_json(const char *json,
                                   uint32_t style_index,
                                   uint64_t seed,
                                   struct PdDocument **out);

/**
 * # Safety
 * `doc` must come from a `pd_render_*` call and not be freed twice.
 */
void pd_document_free(struct PdDocument *doc);

/**
 * # Safety
 * `doc` must be a live document handle or null.
 */
size_t pd_document_width(const struct PdDocument *doc);

/**
 * # Safety
 * `doc` must be a live document handle or null.
 */
size_t pd_document_height(const struct PdDocument *doc);

/**
 * Row-major RGB bytes (`width * height * 3`), owned by the document.
 *
 * # Safety
 * `doc` must be a live document handle or null; `len` may be null.
 */
const uint8_t *pd_document_pixels(const struct PdDocument *doc, size_t *len);

/**
 * Ground-truth text, owned by the document.
 *
 * # Safety
 * `doc` must be a live document handle or null.
 */
const char *pd_document_text(const struct PdDocument *doc);

/**
 * # Safety
 * `doc` must be a live document handle or null.
 */
size_t pd_document_word_count(const struct PdDocument *doc);

/**
 * Box and text of word `index`. `text` may be null; otherwise it receives a
 * pointer owned by the document.
 *
 * # Safety
 * `doc` must be a live document handle; `out` must be valid.
 */
enum PdStatus pd_document_word(const struct PdDocument *doc,
                               size_t index,
                               struct PdWordBox *out,
                               const char **text);

/**
 * Encodes the document image as binary PPM into a new buffer released with
 * [`pd_bytes_free`].
 *
 * # Safety
 * `doc` must be a live document handle; `out` and `len` must be valid.
 */
enum PdStatus pd_encode_ppm(const struct PdDocument *doc, uint8_t **out, size_t *len);

/**
 * # Safety
 * `bytes`/`len` must come from [`pd_encode_ppm`].
 */
void pd_bytes_free(uint8_t *bytes, size_t len);

/**
 * Variable-resolution patch grid for a `width × height` source.
 *
 * # Safety
 * `out` must be valid.
 */
enum PdStatus pd_choose_grid(size_t width, size_t height, size_t budget, struct PdGrid *out);

/**
 * # Safety
 * `a` and `b` must be valid C strings; `out` must be valid.
 */
enum PdStatus pd_levenshtein(const char *a, const char *b, size_t *out);

/**
 * ANLS of `prediction` against `n_golds` gold answers (threshold 0.5).
 *
 * # Safety
 * `prediction` and each of the `n_golds` entries of `golds` must be valid C
 * strings; `out` must be valid.
 */
enum PdStatus pd_anls(const char *prediction,
                      const char *const *golds,
                      size_t n_golds,
                      double *out);

/**
 * Loads a checkpoint written by `pixeldoc pretrain`.
 *
 * # Safety
 * `path` must be a valid C string and `out` a valid pointer.
 */
enum PdStatus pd_model_load(const char *path, struct PdModel **out);

/**
 * # Safety
 * `model` must come from [`pd_model_load`] and not be freed twice.
 */
void pd_model_free(struct PdModel *model);

/**
 * Answers `question` about `doc` by greedy decoding on a `grid_rows ×
 * grid_cols` patch grid. The answer is released with [`pd_string_free`].
 *
 * # Safety
 * Handles must be live, `question` a valid C string and `out` valid.
 */
enum PdStatus pd_model_answer(const struct PdModel *model,
                              const struct PdDocument *doc,
                              const char *question,
                              size_t grid_rows,
                              size_t grid_cols,
                              char **out);

/**
 * # Safety
 * `s` must come from [`pd_model_answer`] and not be freed twice.
 */
void pd_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PIXELDOC_H */
