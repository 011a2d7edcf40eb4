#ifndef CAPSNET_CAPSNET_H
#define CAPSNET_CAPSNET_H

#include <stddef.h>
#include <stdint.h>

#if defined(CAPSNET_BUILDING_LIBRARY)
#define CAPSNET_API __attribute__((visibility("default")))
#else
#define CAPSNET_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum capsnet_status {
  CAPSNET_OK = 0,
  CAPSNET_ERR_CONFIG = 1,       /* invalid config value, unknown key */
  CAPSNET_ERR_DIMENSION = 2,
  CAPSNET_ERR_DOMAIN = 3,       /* non-finite or out-of-domain numerics */
  CAPSNET_ERR_CONTRACT = 4,
  CAPSNET_ERR_FORMAT = 5,       /* malformed file */
  CAPSNET_ERR_LENGTH = 6,       /* truncated file */
  CAPSNET_ERR_CONSISTENCY = 7,
  CAPSNET_ERR_IO = 8,
  CAPSNET_ERR_INVALID_ARGUMENT = 9,  /* null handle or pointer, index out of range */
  CAPSNET_ERR_INTERNAL = 10
} capsnet_status;

typedef enum capsnet_run_status {
  CAPSNET_RUN_COMPLETED = 0,
  CAPSNET_RUN_DIVERGED = 1,
  CAPSNET_RUN_FAILED = 2
} capsnet_run_status;

typedef struct capsnet_config capsnet_config;
typedef struct capsnet_runs capsnet_runs;
typedef struct capsnet_network capsnet_network;

/* Message of the last failed call on this thread; "" when none. */
CAPSNET_API const char* capsnet_last_error(void);
CAPSNET_API const char* capsnet_status_name(capsnet_status status);
CAPSNET_API const char* capsnet_version(void);

/* ---- experiment config ---- */

CAPSNET_API capsnet_status capsnet_config_create(capsnet_config** out);
/* JSON file; unknown keys are CAPSNET_ERR_CONFIG. */
CAPSNET_API capsnet_status capsnet_config_load(const char* path, capsnet_config** out);
/* Lists take comma-separated values, e.g. ("depths", "1,3,6,10"). */
CAPSNET_API capsnet_status capsnet_config_set(capsnet_config* cfg, const char* key, const char* value);
CAPSNET_API capsnet_status capsnet_config_validate(const capsnet_config* cfg);
/* Copies the JSON text into buf (NUL-terminated, truncated to cap) and
   stores the full length including the NUL in *needed when non-null. */
CAPSNET_API capsnet_status capsnet_config_to_json(const capsnet_config* cfg, char* buf, size_t cap, size_t* needed);
CAPSNET_API size_t capsnet_config_key_count(void);
/* NULL when i is out of range. */
CAPSNET_API const char* capsnet_config_key(size_t i);
CAPSNET_API void capsnet_config_destroy(capsnet_config* cfg);

/* ---- experiments ---- */

typedef struct capsnet_run_summary {
  const char* run_id;     /* valid while the capsnet_runs handle lives */
  const char* algorithm;
  size_t depth;
  uint64_t seed;
  capsnet_run_status status;
  double test_accuracy;   /* NaN when unavailable */
  double avg_dead_count;  /* final test epoch, conv capsule layers */
  double avg_dead_fraction;
  size_t epochs;
  size_t parameter_count;
  double wall_seconds;
} capsnet_run_summary;

/* Single run (algorithm, depth, seed from the config). Writes the run record,
   a checkpoint and the reports under outdir. */
CAPSNET_API capsnet_status capsnet_train(const capsnet_config* cfg, capsnet_runs** out);
/* algorithms x depths x seeds grid; failed runs are recorded, not fatal. */
CAPSNET_API capsnet_status capsnet_sweep(const capsnet_config* cfg, capsnet_runs** out);
/* Re-emits the reports from the run records persisted under outdir. */
CAPSNET_API capsnet_status capsnet_analyze(const char* outdir, capsnet_runs** out);

CAPSNET_API size_t capsnet_runs_count(const capsnet_runs* runs);
CAPSNET_API capsnet_status capsnet_runs_get(const capsnet_runs* runs, size_t i, capsnet_run_summary* out);
/* Per-epoch mean training loss. Copies min(cap, epochs) values and stores
   the epoch count in *n. */
CAPSNET_API capsnet_status capsnet_runs_epoch_losses(const capsnet_runs* runs, size_t i, double* out, size_t cap,
                                                     size_t* n);
CAPSNET_API void capsnet_runs_destroy(capsnet_runs* runs);

/* ---- selftest ---- */

typedef void (*capsnet_check_callback)(const char* name, int passed, const char* detail, void* user);
/* Runs the quick oracle/invariant suite; *failed receives the number of
   failing checks. The callback (optional) sees every check. */
CAPSNET_API capsnet_status capsnet_selftest(capsnet_check_callback cb, void* user, size_t* failed);

/* ---- networks ---- */

/* Fresh network from the config's architecture fields, algorithm, depth and
   seed, for images of the given shape. */
CAPSNET_API capsnet_status capsnet_network_create(const capsnet_config* cfg, size_t in_channels, size_t image_size,
                                                  size_t n_classes, capsnet_network** out);
CAPSNET_API capsnet_status capsnet_network_load(const char* path, capsnet_network** out);
CAPSNET_API capsnet_status capsnet_network_save(const capsnet_network* net, const char* path);
CAPSNET_API capsnet_status capsnet_network_parameter_count(const capsnet_network* net, size_t* out);
CAPSNET_API capsnet_status capsnet_network_n_classes(const capsnet_network* net, size_t* out);
/* images: n x channels x size x size doubles, already normalized the way the
   network was trained. labels: n entries. activations (optional): n x n_classes. */
CAPSNET_API capsnet_status capsnet_network_predict(capsnet_network* net, const double* images, size_t n,
                                                   size_t* labels, double* activations);
CAPSNET_API void capsnet_network_destroy(capsnet_network* net);

#ifdef __cplusplus
}
#endif

#endif
