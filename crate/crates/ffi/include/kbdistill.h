#ifndef KBDISTILL_H
#define KBDISTILL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a library call.
 */
typedef enum KbStatus {
  KB_STATUS_OK = 0,
  KB_STATUS_NULL_POINTER = 1,
  KB_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad configuration, template or argument.
   */
  KB_STATUS_CONFIG = 3,
  /**
   * Malformed or inconsistent input data.
   */
  KB_STATUS_DATA = 4,
  /**
   * Remote service failure.
   */
  KB_STATUS_REMOTE = 5,
  KB_STATUS_PANIC = 6,
} KbStatus;

/**
 * Opaque corpus handle.
 */
typedef struct KbCorpus KbCorpus;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string.
 */
const char *kb_version(void);

/**
 * Copy of the last error raised on this thread, or NULL when the last call
 * succeeded. Free with `kb_string_free`.
 */
char *kb_last_error_message(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void kb_string_free(char *s);

/**
 * Loads a corpus JSONL file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum KbStatus kb_corpus_load(const char *path, struct KbCorpus **out);

/**
 * Writes a corpus as JSONL, atomically.
 *
 * # Safety
 * `corpus` must be a live handle; `path` a NUL-terminated string.
 */
enum KbStatus kb_corpus_save(const struct KbCorpus *corpus, const char *path);

/**
 * Number of triples; 0 for NULL.
 *
 * # Safety
 * `corpus` must be NULL or a live handle.
 */
size_t kb_corpus_len(const struct KbCorpus *corpus);

/**
 * New handle holding the first occurrence of every triple id.
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
enum KbStatus kb_corpus_dedup(const struct KbCorpus *corpus, struct KbCorpus **out);

/**
 * New handle with the triples whose score in `scores_path` is at least
 * `threshold`.
 *
 * # Safety
 * `corpus` must be a live handle; `scores_path` a NUL-terminated string;
 * `out` must be writable.
 */
enum KbStatus kb_corpus_filter(const struct KbCorpus *corpus,
                               const char *scores_path,
                               double threshold,
                               struct KbCorpus **out);

/**
 * Sum of soft-unique subset sizes over (event, relation) groups.
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
enum KbStatus kb_corpus_softly_unique_size(const struct KbCorpus *corpus, size_t *out);

/**
 * Student training text, one line per triple.
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
enum KbStatus kb_corpus_export(const struct KbCorpus *corpus, char **out);

/**
 * # Safety
 * `corpus` must be NULL or a handle from this library not yet freed.
 */
void kb_corpus_free(struct KbCorpus *corpus);

/**
 * BLEU-2 of `candidate` against `n_references` reference strings.
 *
 * # Safety
 * `candidate` and each of the `n_references` entries of `references` must be
 * NUL-terminated strings; `out` must be writable.
 */
enum KbStatus kb_bleu2(const char *candidate,
                       const char *const *references,
                       size_t n_references,
                       double *out);

/**
 * Cross-entropy minus entropy.
 */
double kb_kl_divergence(double h_self, double h_cross);

/**
 * Average precision of `n` scores against accept flags. Ties rank in input
 * order.
 *
 * # Safety
 * `scores` and `accept` must point to `n` readable values; `out` must be
 * writable.
 */
enum KbStatus kb_average_precision(const double *scores, const bool *accept, size_t n, double *out);

/**
 * Best recall at precision >= `target_precision`.
 *
 * # Safety
 * As for `kb_average_precision`.
 */
enum KbStatus kb_recall_at_precision(const double *scores,
                                     const bool *accept,
                                     size_t n,
                                     double target_precision,
                                     double *out);

/**
 * Few-shot inference prompt for `event` (with PersonX/PersonY markers)
 * under `relation` (e.g. "xReact"), using the built-in templates.
 *
 * # Safety
 * All string arguments must be NUL-terminated; `out` must be writable.
 */
enum KbStatus kb_render_inference_prompt(const char *relation,
                                         const char *event,
                                         const char *name_x,
                                         const char *name_y,
                                         char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KBDISTILL_H */
