#ifndef CEQE_H
#define CEQE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum CeqeStatus {
  CEQE_STATUS_OK = 0,
  CEQE_STATUS_NULL_ARGUMENT = 1,
  CEQE_STATUS_INVALID_UTF8 = 2,
  CEQE_STATUS_IO = 3,
  CEQE_STATUS_PARSE = 4,
  CEQE_STATUS_CONFIG = 5,
  CEQE_STATUS_INVALID_ARGUMENT = 6,
  CEQE_STATUS_UNKNOWN_DOCUMENT = 7,
  CEQE_STATUS_FORMAT = 8,
  CEQE_STATUS_PROVIDER = 9,
  CEQE_STATUS_NO_CANDIDATES = 10,
  CEQE_STATUS_EVAL = 11,
  CEQE_STATUS_PANIC = 12,
} CeqeStatus;

// Retrieval engine configured from a TOML experiment file.
typedef struct CeqeEngine CeqeEngine;

// Inverted index handle.
typedef struct CeqeIndex CeqeIndex;

// Ranked documents for one query.
typedef struct CeqeRanking CeqeRanking;

// Memory-mapped mention store handle.
typedef struct CeqeStore CeqeStore;

// Weighted expansion terms, heaviest first.
typedef struct CeqeTerms CeqeTerms;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *ceqe_last_error(void);

// Library version as a static NUL-terminated string.
const char *ceqe_version(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void ceqe_string_free(char *s);

// Builds an index from a TREC SGML or JSONL corpus file. `stemmer` is
// `krovetz`, `porter2` or `none`; English stopwords are removed.
//
// # Safety
// Strings must be NUL-terminated; `out` must be writable.
enum CeqeStatus ceqe_index_build(const char *corpus_path,
                                 const char *stemmer,
                                 struct CeqeIndex **out);

// # Safety
// `path` must be NUL-terminated; `out` must be writable.
enum CeqeStatus ceqe_index_load(const char *path, struct CeqeIndex **out);

// # Safety
// `index` must be a live handle; `path` must be NUL-terminated.
enum CeqeStatus ceqe_index_save(const struct CeqeIndex *index, const char *path);

// Number of documents; 0 for NULL.
//
// # Safety
// `index` must be NULL or a live handle.
size_t ceqe_index_doc_count(const struct CeqeIndex *index);

// Number of distinct indexed stems; 0 for NULL.
//
// # Safety
// `index` must be NULL or a live handle.
size_t ceqe_index_term_count(const struct CeqeIndex *index);

// # Safety
// `index` must be NULL or a handle not yet freed.
void ceqe_index_free(struct CeqeIndex *index);

// BM25 top-`k` for `query_text`, analyzed with the index's stemmer and
// English stopwords.
//
// # Safety
// `index` must be a live handle; strings NUL-terminated; `out` writable.
enum CeqeStatus ceqe_index_bm25(const struct CeqeIndex *index,
                                const char *query_text,
                                size_t k,
                                double k1,
                                double b,
                                struct CeqeRanking **out);

// # Safety
// `ranking` must be NULL or a live handle.
size_t ceqe_ranking_len(const struct CeqeRanking *ranking);

// Document id at rank `i` (0-based), or NULL when out of range. Owned by
// the ranking.
//
// # Safety
// `ranking` must be NULL or a live handle.
const char *ceqe_ranking_doc_id(const struct CeqeRanking *ranking, size_t i);

// Score at rank `i`, or NaN when out of range.
//
// # Safety
// `ranking` must be NULL or a live handle.
double ceqe_ranking_score(const struct CeqeRanking *ranking, size_t i);

// # Safety
// `ranking` must be NULL or a handle not yet freed.
void ceqe_ranking_free(struct CeqeRanking *ranking);

// # Safety
// `path` must be NUL-terminated; `out` must be writable.
enum CeqeStatus ceqe_store_open(const char *path, struct CeqeStore **out);

// # Safety
// `store` must be NULL or a live handle.
size_t ceqe_store_dim(const struct CeqeStore *store);

// # Safety
// `store` must be NULL or a live handle.
size_t ceqe_store_doc_count(const struct CeqeStore *store);

// # Safety
// `store` must be NULL or a live handle.
uint64_t ceqe_store_mention_count(const struct CeqeStore *store);

// # Safety
// `store` must be NULL or a handle not yet freed.
void ceqe_store_free(struct CeqeStore *store);

// Loads the config at `config_path` and every asset it names (index,
// mention store, static vectors, query embeddings or encoder).
//
// # Safety
// `config_path` must be NUL-terminated; `out` must be writable.
enum CeqeStatus ceqe_engine_open(const char *config_path, struct CeqeEngine **out);

// Retrieves one query with `method` (`bm25`, `rm3`, `static`,
// `static-prf`, `ceqe-centroid`, `ceqe-max`, `ceqe-mul`).
//
// # Safety
// `engine` must be a live handle; strings NUL-terminated; `out` writable.
enum CeqeStatus ceqe_engine_search(const struct CeqeEngine *engine,
                                   const char *method,
                                   const char *query_id,
                                   const char *query_text,
                                   struct CeqeRanking **out);

// Expansion term distribution of one query under `method` (any method
// but `bm25`).
//
// # Safety
// `engine` must be a live handle; strings NUL-terminated; `out` writable.
enum CeqeStatus ceqe_engine_expand(const struct CeqeEngine *engine,
                                   const char *method,
                                   const char *query_id,
                                   const char *query_text,
                                   struct CeqeTerms **out);

// # Safety
// `engine` must be NULL or a handle not yet freed.
void ceqe_engine_free(struct CeqeEngine *engine);

// # Safety
// `terms` must be NULL or a live handle.
size_t ceqe_terms_len(const struct CeqeTerms *terms);

// Stem at position `i`, or NULL when out of range. Owned by `terms`.
//
// # Safety
// `terms` must be NULL or a live handle.
const char *ceqe_terms_stem(const struct CeqeTerms *terms, size_t i);

// Weight at position `i`, or NaN when out of range.
//
// # Safety
// `terms` must be NULL or a live handle.
double ceqe_terms_weight(const struct CeqeTerms *terms, size_t i);

// # Safety
// `terms` must be NULL or a handle not yet freed.
void ceqe_terms_free(struct CeqeTerms *terms);

// Scores TREC run text against qrels text. `metrics` is a comma-separated
// list (`map,ndcg_cut_10,…`) or NULL for the standard set. Writes a JSON
// report to `out_json`; free it with [`ceqe_string_free`].
//
// # Safety
// Strings must be NUL-terminated; `out_json` must be writable.
enum CeqeStatus ceqe_evaluate(const char *run_text,
                              const char *qrels_text,
                              const char *metrics,
                              char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CEQE_H */
