#ifndef DOCRET_H
#define DOCRET_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DocretStatus {
  DOCRET_STATUS_OK = 0,
  DOCRET_STATUS_NULL_POINTER = 1,
  DOCRET_STATUS_INVALID_UTF8 = 2,
  DOCRET_STATUS_INVALID_ARGUMENT = 3,
  DOCRET_STATUS_DIM_MISMATCH = 4,
  DOCRET_STATUS_ZERO_VECTOR = 5,
  DOCRET_STATUS_INVALID_DATA = 6,
  DOCRET_STATUS_IO = 7,
  DOCRET_STATUS_BUFFER_TOO_SMALL = 8,
  DOCRET_STATUS_INTERNAL = 9,
  DOCRET_STATUS_PANIC = 10,
} DocretStatus;

typedef enum DocretMergeMethod {
  DOCRET_MERGE_METHOD_LINEAR = 0,
  DOCRET_MERGE_METHOD_SLERP = 1,
} DocretMergeMethod;

typedef struct DocretCheckpoint DocretCheckpoint;

typedef struct DocretIndex DocretIndex;

typedef struct DocretProvider DocretProvider;

/**
 * One search result: row position in the index and its score.
 */
typedef struct DocretHit {
  size_t position;
  double score;
} DocretHit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next docret call on the same thread.
 */
const char *docret_last_error(void);

enum DocretStatus docret_cosine(const float *a, const float *b, size_t dim, double *out);

/**
 * MaxSim of row-major token matrices `q` (`nq x dim`) and `d` (`nd x dim`).
 * Rows are used as given, without normalization.
 */
enum DocretStatus docret_maxsim(const float *q,
                                size_t nq,
                                const float *d,
                                size_t nd,
                                size_t dim,
                                double *out);

enum DocretStatus docret_synthetic_new(uint64_t seed, size_t dim, struct DocretProvider **out);

/**
 * Embeds `text` into `out` (capacity `cap` floats); `written` receives the
 * dimension. Returns `BufferTooSmall` when `cap` is short.
 */
enum DocretStatus docret_provider_embed(const struct DocretProvider *provider,
                                        const char *text,
                                        float *out,
                                        size_t cap,
                                        size_t *written);

void docret_provider_free(struct DocretProvider *provider);

/**
 * Builds a dense index from `n` ids and a row-major `n x dim` matrix.
 * A nonzero `ann` also builds an HNSW graph with default parameters.
 */
enum DocretStatus docret_index_build(const char *const *ids,
                                     const float *vectors,
                                     size_t n,
                                     size_t dim,
                                     int ann,
                                     struct DocretIndex **out);

enum DocretStatus docret_index_load(const char *dir, struct DocretIndex **out);

enum DocretStatus docret_index_save(const struct DocretIndex *index, const char *dir);

/**
 * Number of documents, or 0 for a null handle.
 */
size_t docret_index_len(const struct DocretIndex *index);

/**
 * Id of the document at `position`, or NULL when out of range. Borrowed
 * from the index; valid until it is freed.
 */
const char *docret_index_id(const struct DocretIndex *index, size_t position);

/**
 * Top-`k` search. `hits` must hold `k` entries; `found` receives the count
 * written. A nonzero `ann` uses the HNSW graph.
 */
enum DocretStatus docret_index_search(const struct DocretIndex *index,
                                      const float *query,
                                      size_t dim,
                                      size_t k,
                                      int ann,
                                      struct DocretHit *hits,
                                      size_t *found);

void docret_index_free(struct DocretIndex *index);

enum DocretStatus docret_checkpoint_load(const char *path, struct DocretCheckpoint **out);

enum DocretStatus docret_checkpoint_save(const struct DocretCheckpoint *ckpt, const char *path);

size_t docret_checkpoint_tensor_count(const struct DocretCheckpoint *ckpt);

/**
 * Merges two checkpoints with the same schema. `method` is a
 * `DocretMergeMethod` value. For SLERP `alpha = 0`
 * returns `a`; for linear `alpha` is the weight of `a`.
 */
enum DocretStatus docret_checkpoint_merge(const struct DocretCheckpoint *a,
                                          const struct DocretCheckpoint *b,
                                          int method,
                                          double alpha,
                                          struct DocretCheckpoint **out);

void docret_checkpoint_free(struct DocretCheckpoint *ckpt);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DOCRET_H */
