#ifndef KCFPLM_H
#define KCFPLM_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(KCF_BUILDING_LIBRARY)
#define KCF_API __attribute__((visibility("default")))
#else
#define KCF_API
#endif

typedef enum kcf_status {
  KCF_OK = 0,
  KCF_ERR_INPUT = 1,    /* unreadable or malformed input / artifact */
  KCF_ERR_CONFIG = 2,   /* bad or missing configuration key */
  KCF_ERR_VERSION = 3,  /* incompatible artifact version */
  KCF_ERR_DOMAIN = 4,   /* argument outside a function's domain */
  KCF_ERR_EMPTY = 5,    /* filtering left no data */
  KCF_ERR_DIVERGED = 6, /* training loss became non-finite */
  KCF_ERR_INTERNAL = 7
} kcf_status;

typedef struct kcf_session kcf_session;

KCF_API const char* kcf_version(void);
KCF_API int kcf_artifact_version(void);
KCF_API const char* kcf_status_name(kcf_status status);

/* Opens a session over the INI file at config_path (NULL for built-in
 * defaults) with "section.key=value" overrides applied in order. On failure
 * *out is NULL and kcf_last_error() describes the problem. */
KCF_API kcf_status kcf_session_open(const char* config_path, const char* const* overrides, size_t n_overrides,
                                    kcf_session** out);
KCF_API void kcf_session_close(kcf_session* session);

/* Single-line message for the last failed call on this session; "" after a
 * success. Valid until the next call on the session. */
KCF_API const char* kcf_session_last_error(const kcf_session* session);
/* Message for the last failure on this thread that had no session. */
KCF_API const char* kcf_last_error(void);
/* JSON summary of the last successful stage call. */
KCF_API const char* kcf_session_last_result(const kcf_session* session);
KCF_API const char* kcf_session_run_dir(const kcf_session* session);

/* Pipeline stages; artifacts go to the configured run directory. */
KCF_API kcf_status kcf_ingest(kcf_session* session);
KCF_API kcf_status kcf_extract_aspects(kcf_session* session);
KCF_API kcf_status kcf_build_kg(kcf_session* session);
KCF_API kcf_status kcf_train(kcf_session* session);
/* split: "train", "validation" or "test" (NULL means test). Outputs may be NULL. */
KCF_API kcf_status kcf_evaluate(kcf_session* session, const char* split, double* mse, size_t* count);
/* variants NULL / n = 0 runs every variant. mean_mse, when given, receives
 * one mean test MSE per variant run. */
KCF_API kcf_status kcf_ablate(kcf_session* session, const char* const* variants, size_t n_variants,
                              double* mean_mse);
KCF_API kcf_status kcf_sweep(kcf_session* session, const int* layers, size_t n_layers, double* mean_mse);
KCF_API kcf_status kcf_predict(kcf_session* session, const char* user, const char* item, double* rating);
/* Predicts every "user item" line of pairs_path into predict.tsv. */
KCF_API kcf_status kcf_predict_pairs(kcf_session* session, const char* pairs_path, size_t* pairs);
/* Writes attention.jsonl for the split's pairs, or for the "user item" lines
 * of pairs_path when it is not NULL. */
KCF_API kcf_status kcf_dump_attention(kcf_session* session, const char* split, const char* pairs_path,
                                      size_t* pairs);

/* Stateless helpers. */
KCF_API kcf_status kcf_aspect_weight(int num, int rating_max, double* weight);
KCF_API kcf_status kcf_polarity_weights(int positive, int negative, double* good, double* bad);

#ifdef __cplusplus
}
#endif

#endif
