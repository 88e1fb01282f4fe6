#ifndef ATTITUDE_H
#define ATTITUDE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AttPolarity {
  ATT_POLARITY_POSITIVE = 0,
  ATT_POLARITY_NEGATIVE = 1,
  ATT_POLARITY_NEUTRAL = 2,
} AttPolarity;

/**
 * Result codes of every fallible call.
 */
typedef enum AttStatus {
  ATT_STATUS_OK = 0,
  ATT_STATUS_NULL_POINTER = 1,
  ATT_STATUS_INVALID_UTF8 = 2,
  ATT_STATUS_IO = 3,
  ATT_STATUS_PARSE = 4,
  ATT_STATUS_DATA = 5,
  ATT_STATUS_CONFIG = 6,
  ATT_STATUS_SHAPE = 7,
  ATT_STATUS_NUMERIC = 8,
  ATT_STATUS_NOT_ATTENTIVE = 9,
  ATT_STATUS_BUFFER_TOO_SMALL = 10,
  ATT_STATUS_PANIC = 11,
} AttStatus;

typedef enum AttTermKind {
  ATT_TERM_KIND_WORD = 0,
  ATT_TERM_KIND_ENTITY_SUBJ = 1,
  ATT_TERM_KIND_ENTITY_OBJ = 2,
  ATT_TERM_KIND_ENTITY_OTHER = 3,
  ATT_TERM_KIND_FRAME = 4,
  ATT_TERM_KIND_PUNCTUATION = 5,
  ATT_TERM_KIND_NUMBER = 6,
  ATT_TERM_KIND_URL = 7,
} AttTermKind;

/**
 * Opaque frame lexicon.
 */
typedef struct AttFrameLexicon AttFrameLexicon;

/**
 * Opaque trained model.
 */
typedef struct AttModel AttModel;

/**
 * Frame span `[start, end)` over the input lemmas.
 */
typedef struct AttFrameMatch {
  size_t start;
  size_t end;
  enum AttPolarity polarity;
} AttFrameMatch;

/**
 * One context term. `lemma` is read for words and frames only, and
 * `polarity` for frames only.
 */
typedef struct AttTerm {
  enum AttTermKind kind;
  const char *lemma;
  enum AttPolarity polarity;
} AttTerm;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty when none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *att_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *att_version(void);

/**
 * Loads a frame lexicon file (`lemma[ lemma...]<TAB>pos|neg|neu`).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AttStatus att_frames_load(const char *path, struct AttFrameLexicon **out);

/**
 * Parses a frame lexicon from text in the file format.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AttStatus att_frames_parse(const char *text, struct AttFrameLexicon **out);

/**
 * Number of entries; 0 for a null handle.
 *
 * # Safety
 * `lex` must be null or a live handle.
 */
size_t att_frames_len(const struct AttFrameLexicon *lex);

/**
 * Greedy longest-match frame spans over `n` lemmas. Writes at most `cap`
 * matches to `out` and the total count to `written`; when the total
 * exceeds `cap` the call returns `ATT_STATUS_BUFFER_TOO_SMALL`.
 *
 * # Safety
 * `lemmas` must point to `n` NUL-terminated strings, `out` to `cap`
 * writable matches, and `written` must be valid.
 */
enum AttStatus att_frames_match(const struct AttFrameLexicon *lex,
                                const char *const *lemmas,
                                size_t n,
                                struct AttFrameMatch *out,
                                size_t cap,
                                size_t *written);

/**
 * # Safety
 * `lex` must be null or a handle not yet freed.
 */
void att_frames_free(struct AttFrameLexicon *lex);

/**
 * Loads a checkpoint written by `attitude train` (parameters plus the
 * `.json` sidecar next to it).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AttStatus att_model_load(const char *path, struct AttModel **out);

/**
 * Context window n; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t att_model_window(const struct AttModel *model);

/**
 * Size z of the embedded context; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t att_model_output_size(const struct AttModel *model);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
bool att_model_is_attentive(const struct AttModel *model);

/**
 * Class probabilities (positive, negative, neutral) of one context.
 * Contexts longer than the window are cropped around the participants.
 *
 * # Safety
 * `terms` must point to `n` terms and `probs` to 3 writable doubles.
 */
enum AttStatus att_model_predict(const struct AttModel *model,
                                 const struct AttTerm *terms,
                                 size_t n,
                                 double *probs);

/**
 * Attention weights over the (cropped) context terms. Writes the number
 * of terms to `written`; fails with `ATT_STATUS_BUFFER_TOO_SMALL` when it
 * exceeds `cap`.
 *
 * # Safety
 * `terms` must point to `n` terms, `alpha` to `cap` writable doubles, and
 * `written` must be valid.
 */
enum AttStatus att_model_alpha(const struct AttModel *model,
                               const struct AttTerm *terms,
                               size_t n,
                               double *alpha,
                               size_t cap,
                               size_t *written);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void att_model_free(struct AttModel *model);

/**
 * Silverman bandwidth 1.06·σ̂·N^(−1/5), floored at 1e-3; NaN when
 * `samples` is null and `n` positive.
 *
 * # Safety
 * `samples` must point to `n` doubles.
 */
double att_silverman_bandwidth(const double *samples, size_t n);

/**
 * Gaussian kernel density of `samples` at `m` grid points. A bandwidth
 * that is not positive selects Silverman's rule.
 *
 * # Safety
 * `samples` must point to `n` doubles, `grid` to `m` doubles and `out` to
 * `m` writable doubles.
 */
enum AttStatus att_kde(const double *samples,
                       size_t n,
                       const double *grid,
                       size_t m,
                       double bandwidth,
                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ATTITUDE_H */
