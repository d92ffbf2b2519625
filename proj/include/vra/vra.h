/* C interface to the recommender. Every function returns a status code; on
 * failure vra_last_error() describes the problem. Handles are opaque and
 * owned by the caller once created. */
#ifndef VRA_VRA_H
#define VRA_VRA_H

#include <stddef.h>
#include <stdint.h>

#if defined(VRA_BUILDING_LIBRARY)
#define VRA_API __attribute__((visibility("default")))
#else
#define VRA_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vra_status {
  VRA_OK = 0,
  VRA_ERR_ARGUMENT = 1, /* null handle, bad index, buffer too small */
  VRA_ERR_CONFIG = 2,   /* unknown key, bad value, missing path */
  VRA_ERR_DATA = 3,     /* malformed or inconsistent input data */
  VRA_ERR_IO = 4,       /* file could not be read or written */
  VRA_ERR_DIVERGED = 5, /* training produced non-finite or exploding parameters */
  VRA_ERR_INTERNAL = 6
} vra_status;

typedef struct vra_config vra_config;
typedef struct vra_metrics vra_metrics;
typedef struct vra_ranking vra_ranking;

/* Receives one line of progress output, without the trailing newline. */
typedef void (*vra_log_fn)(const char* line, void* user_data);

VRA_API const char* vra_version(void);
/* Message for the last failing call on this thread; "" if none. */
VRA_API const char* vra_last_error(void);
VRA_API const char* vra_status_name(vra_status status);

VRA_API vra_status vra_config_create(vra_config** out);
VRA_API void vra_config_destroy(vra_config* config);
VRA_API vra_status vra_config_set(vra_config* config, const char* key, const char* value);
/* Copies the value into buf (NUL-terminated). *needed receives the size
 * including the terminator; a too-small buffer yields VRA_ERR_ARGUMENT. */
VRA_API vra_status vra_config_get(const vra_config* config, const char* key, char* buf, size_t capacity,
                                  size_t* needed);
VRA_API vra_status vra_config_load(vra_config* config, const char* path);
/* Resolves every key and reports the first invalid value. */
VRA_API vra_status vra_config_validate(const vra_config* config);

/* Commands. `log` may be NULL. */
VRA_API vra_status vra_prepare(const vra_config* config, vra_log_fn log, void* user_data);
VRA_API vra_status vra_train(const vra_config* config, vra_log_fn log, void* user_data);
VRA_API vra_status vra_evaluate(const vra_config* config, vra_log_fn log, void* user_data, vra_metrics** out);
VRA_API vra_status vra_stats(const vra_config* config, vra_log_fn log, void* user_data);
/* Top-n for the configured user and interval; the CSV listing goes to log. */
VRA_API vra_status vra_recommend(const vra_config* config, vra_log_fn log, void* user_data, vra_ranking** out);

VRA_API size_t vra_metrics_count(const vra_metrics* metrics);
VRA_API vra_status vra_metrics_get(const vra_metrics* metrics, size_t index, size_t* n, double* f1, double* ndcg,
                                   size_t* groups, size_t* skipped);
VRA_API void vra_metrics_destroy(vra_metrics* metrics);

VRA_API size_t vra_ranking_count(const vra_ranking* ranking);
VRA_API vra_status vra_ranking_get(const vra_ranking* ranking, size_t index, uint32_t* item, double* score);
/* 1 when fewer than top_n candidates existed. */
VRA_API int vra_ranking_truncated(const vra_ranking* ranking);
VRA_API void vra_ranking_destroy(vra_ranking* ranking);

#ifdef __cplusplus
}
#endif

#endif
