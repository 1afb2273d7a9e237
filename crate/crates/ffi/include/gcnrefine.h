#ifndef GCNREFINE_H
#define GCNREFINE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Label value of samples that belong to no cluster.
 */
#define GCR_UNASSIGNED UINT32_MAX

/*
 Result codes returned by every fallible function.
 */
typedef enum GcrStatus {
  GCR_STATUS_OK = 0,
  GCR_STATUS_NULL_POINTER = 1,
  GCR_STATUS_INVALID_ARGUMENT = 2,
  GCR_STATUS_IO = 3,
  GCR_STATUS_FORMAT = 4,
  GCR_STATUS_DIMENSION_MISMATCH = 5,
  GCR_STATUS_NUMERIC = 6,
  GCR_STATUS_INTERNAL = 7,
} GcrStatus;

/*
 Edge scoring methods for [`gcr_cluster`].
 */
typedef enum GcrScoringMethod {
  GCR_SCORING_METHOD_PRODUCT = 0,
  GCR_SCORING_METHOD_SUM = 1,
  GCR_SCORING_METHOD_WEIGHTED = 2,
  GCR_SCORING_METHOD_GCN_WEIGHTED = 3,
} GcrScoringMethod;

typedef struct GcrEmbeddings GcrEmbeddings;

typedef struct GcrGraph GcrGraph;

typedef struct GcrLabels GcrLabels;

typedef struct GcrModel GcrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the most recent failure on this thread, or null. Valid until
 the next failing call on the same thread.
 */
const char *gcr_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *gcr_version(void);

/*
 Copies `n * d` row-major floats into a new embedding set.

 # Safety
 `data` must point to `n * d` readable floats; `out` must be writable.
 */
enum GcrStatus gcr_embeddings_from_rows(const float *data,
                                        size_t n,
                                        size_t d,
                                        struct GcrEmbeddings **out);

/*
 Loads an EMB1 file.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GcrStatus gcr_embeddings_load(const char *path, struct GcrEmbeddings **out);

/*
 # Safety
 `e` must be null or a live embeddings handle.
 */
size_t gcr_embeddings_n(const struct GcrEmbeddings *e);

/*
 # Safety
 `e` must be null or a live embeddings handle.
 */
size_t gcr_embeddings_dim(const struct GcrEmbeddings *e);

/*
 # Safety
 `e` must be null or a handle not yet freed.
 */
void gcr_embeddings_free(struct GcrEmbeddings *e);

/*
 Synthetic unit-norm embeddings with ground-truth labels.

 # Safety
 `out_embeddings` and `out_labels` must be writable.
 */
enum GcrStatus gcr_synth_generate(size_t num_classes,
                                  size_t samples_per_class,
                                  size_t dim,
                                  double noise_sigma,
                                  uint64_t seed,
                                  struct GcrEmbeddings **out_embeddings,
                                  struct GcrLabels **out_labels);

/*
 Exact KNN similarity graph over unit-norm embeddings.

 # Safety
 `e` must be a live embeddings handle; `out` must be writable.
 */
enum GcrStatus gcr_graph_build(const struct GcrEmbeddings *e,
                               size_t k,
                               double prune_threshold,
                               struct GcrGraph **out);

/*
 Loads a `src,dst,similarity` CSV over `n` nodes.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GcrStatus gcr_graph_load(const char *path, size_t n, struct GcrGraph **out);

/*
 # Safety
 `g` must be a live graph handle; `path` a NUL-terminated string.
 */
enum GcrStatus gcr_graph_save(const struct GcrGraph *g, const char *path);

/*
 # Safety
 `g` must be null or a live graph handle.
 */
size_t gcr_graph_num_nodes(const struct GcrGraph *g);

/*
 # Safety
 `g` must be null or a live graph handle.
 */
size_t gcr_graph_num_edges(const struct GcrGraph *g);

/*
 # Safety
 `g` must be null or a handle not yet freed.
 */
void gcr_graph_free(struct GcrGraph *g);

/*
 Connected components over edges whose score reaches `threshold`.

 # Safety
 `g` must be a live graph handle; `out` must be writable.
 */
enum GcrStatus gcr_cluster(const struct GcrGraph *g,
                           enum GcrScoringMethod method,
                           double threshold,
                           struct GcrLabels **out);

/*
 Copies `n` labels; [`GCR_UNASSIGNED`] marks unassigned samples.

 # Safety
 `labels` must point to `n` readable values; `out` must be writable.
 */
enum GcrStatus gcr_labels_from_array(const uint32_t *labels, size_t n, struct GcrLabels **out);

/*
 Loads an `index,label` CSV.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GcrStatus gcr_labels_load(const char *path, struct GcrLabels **out);

/*
 # Safety
 `l` must be a live labels handle; `path` a NUL-terminated string.
 */
enum GcrStatus gcr_labels_save(const struct GcrLabels *l, const char *path);

/*
 # Safety
 `l` must be null or a live labels handle.
 */
size_t gcr_labels_len(const struct GcrLabels *l);

/*
 # Safety
 `l` must be null or a live labels handle.
 */
size_t gcr_labels_num_clusters(const struct GcrLabels *l);

/*
 Copies all labels into `out`, which must hold `gcr_labels_len` values.

 # Safety
 `l` must be a live labels handle; `out` must point to `capacity`
 writable values.
 */
enum GcrStatus gcr_labels_copy(const struct GcrLabels *l, uint32_t *out, size_t capacity);

/*
 # Safety
 `l` must be null or a handle not yet freed.
 */
void gcr_labels_free(struct GcrLabels *l);

/*
 Normalized mutual information between two fully assigned labelings.

 # Safety
 `a` and `b` must be live labels handles; `out` must be writable.
 */
enum GcrStatus gcr_nmi(const struct GcrLabels *a, const struct GcrLabels *b, double *out);

/*
 Loads a GCN checkpoint.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GcrStatus gcr_model_load(const char *path, struct GcrModel **out);

/*
 # Safety
 `m` must be a live model handle; `path` a NUL-terminated string.
 */
enum GcrStatus gcr_model_save(const struct GcrModel *m, const char *path);

/*
 # Safety
 `m` must be null or a handle not yet freed.
 */
void gcr_model_free(struct GcrModel *m);

/*
 Removes every edge of `g` whose predicted probability is below `p_cut`.

 # Safety
 Handles must be live; `out` must be writable.
 */
enum GcrStatus gcr_infer_prune(const struct GcrModel *m,
                               const struct GcrGraph *g,
                               const struct GcrEmbeddings *e,
                               double p_cut,
                               struct GcrGraph **out);

/*
 Trains a GCN on the most reliable classes of `labels` with default
 settings, prunes `g` and re-clusters at `score_threshold`. `out_model`
 may be null; it receives null when training was skipped.

 # Safety
 Handles must be live; `out_labels` must be writable.
 */
enum GcrStatus gcr_refine(const struct GcrGraph *g,
                          const struct GcrEmbeddings *e,
                          const struct GcrLabels *labels,
                          double score_threshold,
                          uint64_t seed,
                          struct GcrLabels **out_labels,
                          struct GcrModel **out_model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GCNREFINE_H */
