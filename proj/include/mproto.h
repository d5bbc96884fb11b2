/* mproto — multi-prototype distantly-supervised sequence labeling.
 *
 * C interface to the mproto shared library. All functions return an
 * mproto_status; on failure mproto_last_error() holds a message for the
 * calling thread. Objects are opaque handles released with the matching
 * *_free function. Strings returned through char** are heap-allocated and
 * must be released with mproto_string_free.
 */
#ifndef MPROTO_H
#define MPROTO_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mproto_status {
  MPROTO_OK = 0,
  MPROTO_ERR_INVALID_ARGUMENT = 1, /* bad input data or options */
  MPROTO_ERR_CONTRACT = 2,         /* shapes/indices inconsistent with each other */
  MPROTO_ERR_IO = 3,               /* file missing, unreadable or malformed */
  MPROTO_ERR_INTERNAL = 4
} mproto_status;

const char* mproto_version(void);

/* Message for the most recent failure on this thread. */
const char* mproto_last_error(void);

void mproto_string_free(char* s);

/* ------------------------------------------------------------------ *
 * Entropy-regularized optimal transport over raw arrays.
 *
 * cost is row-major rows x cols; gamma_out must hold rows*cols doubles.
 * row_marginals/col_marginals are the prescribed row and column sums.
 * iterations_out/converged_out may be NULL.
 * ------------------------------------------------------------------ */
mproto_status mproto_sinkhorn(const double* cost, size_t rows, size_t cols,
                              const double* row_marginals, const double* col_marginals,
                              double reg_weight, int max_iters, double* gamma_out,
                              int* iterations_out, int* converged_out);

/* ------------------------------------------------------------------ *
 * Corpora and gazetteers.
 * ------------------------------------------------------------------ */
typedef struct mproto_corpus mproto_corpus;
typedef struct mproto_gazetteer mproto_gazetteer;

/* Columnar file: one token per line, blank line between sentences.
 * distant_col/gold_col may be -1 when the file lacks that column. */
mproto_status mproto_corpus_load(const char* path, int token_col, int distant_col,
                                 int gold_col, mproto_corpus** out);
mproto_status mproto_corpus_save(const mproto_corpus* corpus, const char* path);
size_t mproto_corpus_sentences(const mproto_corpus* corpus);
size_t mproto_corpus_tokens(const mproto_corpus* corpus);
void mproto_corpus_free(mproto_corpus* corpus);

/* One entry per line: TYPE<TAB>surface form. */
mproto_status mproto_gazetteer_load(const char* path, mproto_gazetteer** out);
/* First ceil(fraction * size) entries, fraction in (0, 1]. */
mproto_status mproto_gazetteer_subsample(const mproto_gazetteer* gazetteer, double fraction,
                                         mproto_gazetteer** out);
size_t mproto_gazetteer_size(const mproto_gazetteer* gazetteer);
void mproto_gazetteer_free(mproto_gazetteer* gazetteer);

/* Greedy longest-match distant annotation; the result replaces the
 * corpus's distant labels. */
mproto_status mproto_annotate(const mproto_corpus* corpus, const mproto_gazetteer* gazetteer,
                              int case_insensitive, mproto_corpus** out);

/* Span-level precision/recall/F1 of distant vs gold labels, as JSON. */
mproto_status mproto_annotation_quality(const mproto_corpus* corpus, char** json_out);

/* ------------------------------------------------------------------ *
 * Command layer. Each call runs one command end to end: it consumes a
 * JSON argument object (schema documented in the README), writes its
 * artifacts and a run manifest under args["out_dir"], and returns a
 * summary JSON object. mproto_run_replay re-executes a recorded
 * manifest into a fresh output directory.
 * ------------------------------------------------------------------ */
mproto_status mproto_run_annotate(const char* args_json, char** summary_json);
mproto_status mproto_run_train(const char* args_json, char** summary_json);
mproto_status mproto_run_eval(const char* args_json, char** summary_json);
mproto_status mproto_run_diagnose(const char* args_json, char** summary_json);
mproto_status mproto_run_synth(const char* args_json, char** summary_json);
mproto_status mproto_run_replay(const char* manifest_path, const char* out_dir,
                                char** summary_json);

#ifdef __cplusplus
}
#endif

#endif /* MPROTO_H */
