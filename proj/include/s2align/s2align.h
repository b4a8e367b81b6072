/* C interface to the sparse graph-text alignment library.
 *
 * All entry points return an s2al_status. On failure, when `err` is
 * non-NULL, *err receives a malloc'd UTF-8 message that must be released
 * with s2al_string_free(). Output strings follow the same convention.
 * Handles are opaque and freed with their matching *_free function.
 *
 * Configuration strings are JSON documents with the same schema the CLI
 * consumes; unknown keys are rejected.
 */

#ifndef S2ALIGN_S2ALIGN_H
#define S2ALIGN_S2ALIGN_H

#include <stddef.h>

#if defined(_WIN32)
#define S2AL_API __declspec(dllexport)
#else
#define S2AL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum s2al_status {
  S2AL_OK = 0,
  S2AL_ERR_CONFIG = 1,
  S2AL_ERR_IO = 2,
  S2AL_ERR_PARSE = 3,
  S2AL_ERR_VALIDATION = 4,
  S2AL_ERR_CHECKPOINT = 5,
  S2AL_ERR_NON_FINITE = 6,
  S2AL_ERR_INVALID_ARGUMENT = 7,
  S2AL_ERR_INTERNAL = 8
} s2al_status;

typedef struct s2al_corpus s2al_corpus; /* a set of text-attributed graphs */
typedef struct s2al_model s2al_model;   /* trained parameters + config */

S2AL_API const char* s2al_version(void);
S2AL_API void s2al_string_free(char* ptr);

/* ---- corpus ---------------------------------------------------------- */

/* Generates the synthetic multi-domain corpus described by config_json. */
S2AL_API s2al_status s2al_corpus_generate(const char* config_json,
                                          s2al_corpus** out, char** err);

/* Loads TAG-JSONL files. */
S2AL_API s2al_status s2al_corpus_load(const char* const* paths, size_t n_paths,
                                      s2al_corpus** out, char** err);

/* Writes one TAG-JSONL per domain plus manifest.json (and prompts.json for
 * generated corpora) into out_dir. When manifest_json is non-NULL it
 * receives the manifest document. */
S2AL_API s2al_status s2al_corpus_save(const s2al_corpus* corpus,
                                      const char* config_json,
                                      const char* out_dir,
                                      char** manifest_json, char** err);

S2AL_API int s2al_corpus_size(const s2al_corpus* corpus);

/* Per-domain node/edge/text counts as JSON. */
S2AL_API s2al_status s2al_corpus_stats(const s2al_corpus* corpus,
                                       char** stats_json, char** err);

/* Keeps round(keep_fraction * texted) node texts per domain, in place. */
S2AL_API s2al_status s2al_corpus_sparsify(s2al_corpus* corpus,
                                          double keep_fraction,
                                          unsigned long long seed, char** err);

S2AL_API void s2al_corpus_free(s2al_corpus* corpus);

/* ---- training and evaluation ----------------------------------------- */

/* Trains on the corpus (minus configured holdout domains). When out_dir is
 * non-NULL, writes train_log.jsonl, scrb_metrics.jsonl, resolved_config.json
 * and checkpoint.json there. */
S2AL_API s2al_status s2al_train(const char* config_json,
                                const s2al_corpus* corpus, const char* out_dir,
                                s2al_model** out, char** err);

S2AL_API s2al_status s2al_model_save(const s2al_model* model, const char* path,
                                     char** err);
S2AL_API s2al_status s2al_model_load(const char* path, s2al_model** out,
                                     char** err);

/* Zero-shot evaluation of the model on every tag in `targets`.
 * eval_config_json follows the run-config schema; prompts come from
 * eval.prompts_file, or from "prompts" given inline as {"0": "...", ...},
 * or default to the generated corpus's prompt set. */
S2AL_API s2al_status s2al_evaluate(const s2al_model* model,
                                   const s2al_corpus* targets,
                                   const char* eval_config_json,
                                   char** report_json, char** err);

/* Theory checks (weighted risk equalization + spurious-feature elimination).
 * *all_passed is set to 1 when every check passes, else 0. */
S2AL_API s2al_status s2al_verify(const char* config_json, char** report_json,
                                 int* all_passed, char** err);

/* Trains the four objective variants and evaluates zero-shot accuracy on the
 * holdout domain. */
S2AL_API s2al_status s2al_ablate(const char* config_json,
                                 const s2al_corpus* corpus, char** report_json,
                                 char** err);

/* Renders a report produced by this library as a plain-text table. */
S2AL_API s2al_status s2al_render_table(const char* report_json, char** table,
                                       char** err);

S2AL_API void s2al_model_free(s2al_model* model);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* S2ALIGN_S2ALIGN_H */
