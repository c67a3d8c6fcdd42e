#ifndef EMBREC_H
#define EMBREC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call. Values 2-4 match the CLI exit codes.
 */
typedef enum EmbrecStatus {
  EMBREC_STATUS_OK = 0,
  /**
   * Lookup of an unknown user; not an error.
   */
  EMBREC_STATUS_NOT_FOUND = 1,
  EMBREC_STATUS_CONFIG = 2,
  /**
   * Missing, corrupt or inconsistent files and inputs.
   */
  EMBREC_STATUS_DATA = 3,
  EMBREC_STATUS_NUMERIC = 4,
  /**
   * Null pointer, bad UTF-8, index out of range, wrong buffer size.
   */
  EMBREC_STATUS_INVALID_ARGUMENT = 5,
  EMBREC_STATUS_PANIC = 6,
} EmbrecStatus;

/**
 * Loaded clustered index.
 */
typedef struct EmbrecIndex EmbrecIndex;

/**
 * Ranked `(item id, score)` list.
 */
typedef struct EmbrecList EmbrecList;

/**
 * Checkpoint plus the vocabularies it was trained with.
 */
typedef struct EmbrecModel EmbrecModel;

/**
 * Loaded results store.
 */
typedef struct EmbrecStore EmbrecStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *embrec_last_error(void);

/**
 * Library version, static.
 */
const char *embrec_version(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum EmbrecStatus embrec_store_open(const char *path, struct EmbrecStore **out);

/**
 * # Safety
 * `store` must come from [`embrec_store_open`] or be null.
 */
void embrec_store_free(struct EmbrecStore *store);

/**
 * # Safety
 * `store` must be a live handle; `out_users` must be writable.
 */
enum EmbrecStatus embrec_store_len(const struct EmbrecStore *store, size_t *out_users);

/**
 * Stored list of one user. Unknown users give `NotFound` and leave `*out`
 * untouched.
 *
 * # Safety
 * `store` must be a live handle, `user` NUL-terminated, `out` writable.
 */
enum EmbrecStatus embrec_store_lookup(const struct EmbrecStore *store,
                                      const char *user,
                                      struct EmbrecList **out);

/**
 * # Safety
 * `list` must be a live handle or null (which counts as empty).
 */
size_t embrec_list_len(const struct EmbrecList *list);

/**
 * Item id at rank `i`, owned by the list; null when out of range.
 *
 * # Safety
 * `list` must be a live handle or null.
 */
const char *embrec_list_item_id(const struct EmbrecList *list, size_t i);

/**
 * Score at rank `i`; NaN when out of range.
 *
 * # Safety
 * `list` must be a live handle or null.
 */
float embrec_list_score(const struct EmbrecList *list, size_t i);

/**
 * 1 when the list is the popularity fallback for a user without embedding.
 *
 * # Safety
 * `list` must be a live handle or null.
 */
int32_t embrec_list_is_fallback(const struct EmbrecList *list);

/**
 * # Safety
 * `list` must come from this library or be null.
 */
void embrec_list_free(struct EmbrecList *list);

/**
 * # Safety
 * `path` must be NUL-terminated; `out` writable.
 */
enum EmbrecStatus embrec_index_open(const char *path, struct EmbrecIndex **out);

/**
 * # Safety
 * `index` must come from [`embrec_index_open`] or be null.
 */
void embrec_index_free(struct EmbrecIndex *index);

/**
 * Embedding width; 0 for a null handle.
 *
 * # Safety
 * `index` must be a live handle or null.
 */
size_t embrec_index_dim(const struct EmbrecIndex *index);

/**
 * Top `n` items for a user vector, probing the `m` nearest clusters.
 *
 * # Safety
 * `index` must be a live handle, `user` must point at `dim` floats, `out`
 * must be writable.
 */
enum EmbrecStatus embrec_index_retrieve(const struct EmbrecIndex *index,
                                        const float *user,
                                        size_t dim,
                                        size_t n,
                                        size_t m,
                                        struct EmbrecList **out);

/**
 * # Safety
 * All paths must be NUL-terminated; `out` writable.
 */
enum EmbrecStatus embrec_model_open(const char *checkpoint,
                                    const char *title_vocab,
                                    const char *aspect_vocab,
                                    struct EmbrecModel **out);

/**
 * # Safety
 * `model` must come from [`embrec_model_open`] or be null.
 */
void embrec_model_free(struct EmbrecModel *model);

/**
 * Embedding width; 0 for a null handle.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
size_t embrec_model_dim(const struct EmbrecModel *model);

/**
 * Item tower output for one listing, written to `out[0..out_len]`;
 * `out_len` must equal the model dim.
 *
 * # Safety
 * `title` NUL-terminated; `aspects` points at `n_aspects` NUL-terminated
 * strings (may be null when `n_aspects` is 0); `out` holds `out_len` floats.
 */
enum EmbrecStatus embrec_model_embed_item(const struct EmbrecModel *model,
                                          const char *title,
                                          uint32_t category_id,
                                          const char *const *aspects,
                                          size_t n_aspects,
                                          float *out,
                                          size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMBREC_H */
