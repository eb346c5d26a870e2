/* C API for the asklearn library.
 *
 * Conventions:
 *   - Constructors return a status code and write an opaque handle through
 *     an out-pointer; free handles with the matching *_free function.
 *   - Returned strings are heap-allocated NUL-terminated UTF-8; release them
 *     with asklearn_string_free.
 *   - On any non-zero status, asklearn_last_error() returns a thread-local
 *     message describing the failure; the pointer stays valid until the next
 *     failing call on the same thread.
 *   - Handles are not thread-safe; do not share one handle across threads
 *     without external synchronization.
 */
#ifndef ASKLEARN_H
#define ASKLEARN_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. */
enum {
    ASKLEARN_OK = 0,
    ASKLEARN_ERR_NULL = 1,    /* required pointer argument was NULL        */
    ASKLEARN_ERR_UTF8 = 2,    /* string argument was not valid UTF-8       */
    ASKLEARN_ERR_INVALID = 3, /* argument out of range / unknown name      */
    ASKLEARN_ERR_PARSE = 4,   /* malformed KB, corpus or checkpoint text   */
    ASKLEARN_ERR_TRAIN = 5,   /* training failed                           */
    ASKLEARN_ERR_EVAL = 6,    /* evaluation failed                         */
    ASKLEARN_ERR_PANIC = 7    /* internal error                            */
};

/* Opaque handles. */
typedef struct AskKb AskKb;         /* movie knowledge base      */
typedef struct AskCorpus AskCorpus; /* dialogue episode corpus   */
typedef struct AskModel AskModel;   /* trained memory network    */

/* Message for the most recent failure on this thread (never NULL). */
const char *asklearn_last_error(void);

/* Free a string returned by this library. NULL is a no-op. */
void asklearn_string_free(char *s);

/* ------------------------------------------------------- knowledge base */

/* Generate a synthetic movie knowledge base. */
int asklearn_kb_generate(size_t n_movies, size_t n_people, uint64_t seed,
                         AskKb **out);

/* Parse / serialize the textual KB format; write round-trips via parse. */
int asklearn_kb_parse(const char *text, AskKb **out);
int asklearn_kb_write(const AskKb *kb, char **out);

/* Number of entities (movies, people, years, genres). */
int asklearn_kb_entity_count(const AskKb *kb, size_t *out);

void asklearn_kb_free(AskKb *kb);

/* --------------------------------------------------------------- corpus */

/* Generate a dialogue corpus.
 *   task       1..9
 *   regime     "qa" (answer directly), "aq" (ask first), or "mix"
 *   split      "train", "dev" or "test"
 *   p_answer   scripted student's probability of answering correctly
 *   p_relevant scripted student's probability of asking a pertinent question
 * Both probabilities are forced to 1.0 on the test split. */
int asklearn_corpus_generate(const AskKb *kb, uint8_t task,
                             const char *regime, const char *split,
                             size_t n_episodes, uint64_t seed,
                             double p_answer, double p_relevant,
                             AskCorpus **out);

/* Parse / serialize the textual corpus format; write round-trips via parse. */
int asklearn_corpus_parse(const char *text, AskCorpus **out);
int asklearn_corpus_write(const AskCorpus *corpus, char **out);

/* Number of episodes. */
int asklearn_corpus_len(const AskCorpus *corpus, size_t *out);

void asklearn_corpus_free(AskCorpus *corpus);

/* ---------------------------------------------------------------- model */

/* Train a memory network on `train`, keeping the best epoch measured on
 * `dev`.  kind is one of:
 *   "rbi"     reward-based imitation of positively rewarded answers
 *   "rbi+fp"  imitation plus the forward-prediction auxiliary loss
 *   "asker"   binary ask/keep-quiet policy trained by imitation
 * epochs == 0 keeps the built-in default. */
int asklearn_train(const char *kind, const AskCorpus *train,
                   const AskCorpus *dev, const AskKb *kb, size_t epochs,
                   uint64_t seed, AskModel **out);

/* Serialize / load a text checkpoint; save round-trips via load. */
int asklearn_model_save(const AskModel *model, char **out);
int asklearn_model_load(const char *text, AskModel **out);

/* Greedy answer accuracy of `model` on `corpus`, written to *out. */
int asklearn_accuracy(const AskModel *model, const AskCorpus *corpus,
                      const AskKb *kb, double *out);

void asklearn_model_free(AskModel *model);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* ASKLEARN_H */
