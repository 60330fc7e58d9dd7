#ifndef BEEFORMER_H
#define BEEFORMER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BfStatus {
  BF_STATUS_OK = 0,
  BF_STATUS_NULL_POINTER = 1,
  BF_STATUS_INVALID_ARGUMENT = 2,
  BF_STATUS_SHAPE = 3,
  BF_STATUS_CONFIG = 4,
  BF_STATUS_DATA = 5,
  BF_STATUS_NUMERIC = 6,
  BF_STATUS_CORRUPT = 7,
  BF_STATUS_IO = 8,
  BF_STATUS_BUFFER_TOO_SMALL = 9,
  BF_STATUS_PANIC = 10,
} BfStatus;

/**
 * Interactions and item texts of a prepared dataset.
 */
typedef struct BfDataset BfDataset;

typedef struct BfEmbeddings BfEmbeddings;

/**
 * A trainable item encoder bound to one dataset's catalog.
 */
typedef struct BfEncoder BfEncoder;

/**
 * Training settings; obtain defaults from [`bf_train_config_default`].
 */
typedef struct BfTrainConfig {
  size_t m;
  size_t batch_users;
  size_t epochs;
  double lr;
  size_t item_chunk_size;
  uint64_t seed;
  bool normalize_a;
} BfTrainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *bf_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *bf_last_error_message(void);

/**
 * # Safety
 * `bundle_dir` must be a NUL-terminated string and `out` writable.
 */
enum BfStatus bf_dataset_load(const char *bundle_dir, struct BfDataset **out);

/**
 * # Safety
 * `ds` must come from [`bf_dataset_load`] and not be used afterwards.
 */
void bf_dataset_free(struct BfDataset *ds);

/**
 * # Safety
 * `ds` must be a live dataset; output pointers may be NULL to skip.
 */
enum BfStatus bf_dataset_dims(const struct BfDataset *ds,
                              size_t *n_users,
                              size_t *n_items,
                              size_t *n_interactions);

/**
 * Creates a freshly initialized encoder over the dataset's items.
 * `kind` is one of `table`, `bow-linear`, `bow-mlp`, `frozen-head`;
 * `frozen_path` is only read for `frozen-head` and may otherwise be NULL.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum BfStatus bf_encoder_new(const struct BfDataset *ds,
                             const char *kind,
                             size_t dim,
                             uint32_t hash_bits,
                             size_t hidden,
                             bool bias,
                             const char *frozen_path,
                             uint64_t seed,
                             struct BfEncoder **out);

/**
 * Loads a checkpoint written by [`bf_encoder_save`] or `beeformer train`.
 *
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
enum BfStatus bf_encoder_load(const struct BfDataset *ds, const char *path, struct BfEncoder **out);

/**
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
enum BfStatus bf_encoder_save(const struct BfEncoder *enc, const char *path);

/**
 * # Safety
 * `enc` must come from `bf_encoder_new`/`bf_encoder_load`.
 */
void bf_encoder_free(struct BfEncoder *enc);

/**
 * # Safety
 * `enc` must be a live encoder or NULL.
 */
size_t bf_encoder_n_params(const struct BfEncoder *enc);

struct BfTrainConfig bf_train_config_default(void);

/**
 * Trains `enc` on the dataset's interactions; `final_loss` (may be NULL)
 * receives the loss of the last step.
 *
 * # Safety
 * Pointers must be valid; `enc` must have been created for `ds`.
 */
enum BfStatus bf_train(struct BfEncoder *enc,
                       const struct BfDataset *ds,
                       const struct BfTrainConfig *config,
                       double *final_loss);

/**
 * Encodes every item of the encoder's catalog, row-normalized when the
 * encoder was trained with a normalized decoder.
 *
 * # Safety
 * Pointers must be valid.
 */
enum BfStatus bf_embed(const struct BfEncoder *enc, size_t chunk_size, struct BfEmbeddings **out);

/**
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
enum BfStatus bf_embeddings_load(const char *path, struct BfEmbeddings **out);

/**
 * Writes the embedding file, as 32-bit floats when `single_precision`.
 *
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
enum BfStatus bf_embeddings_save(const struct BfEmbeddings *emb,
                                 const char *path,
                                 bool single_precision);

/**
 * # Safety
 * `emb` must be live; output pointers may be NULL to skip.
 */
enum BfStatus bf_embeddings_dims(const struct BfEmbeddings *emb, size_t *n_rows, size_t *n_cols);

/**
 * Copies the row-major matrix into `buf` of `len` doubles.
 *
 * # Safety
 * `buf` must hold `len` writable doubles.
 */
enum BfStatus bf_embeddings_copy(const struct BfEmbeddings *emb, double *buf, size_t len);

/**
 * # Safety
 * `emb` must come from `bf_embed`/`bf_embeddings_load`.
 */
void bf_embeddings_free(struct BfEmbeddings *emb);

/**
 * Cosine-similarity top-`k` items for user `user` of `ds`, excluding
 * items the user already has. Writes up to `k` item indices and scores
 * and the actual count to `out_len`.
 *
 * # Safety
 * `out_items` and `out_scores` must hold `k` elements each.
 */
enum BfStatus bf_recommend(const struct BfEmbeddings *emb,
                           const struct BfDataset *ds,
                           size_t user,
                           size_t k,
                           size_t *out_items,
                           double *out_scores,
                           size_t *out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEEFORMER_H */
