#ifndef FRAGNET_FRAGNET_H
#define FRAGNET_FRAGNET_H

#include <stddef.h>
#include <stdint.h>

#if defined(FRAGNET_BUILDING_LIBRARY)
#define FRAGNET_API __attribute__((visibility("default")))
#else
#define FRAGNET_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef struct fragnet_model fragnet_model;
typedef struct fragnet_dataset fragnet_dataset;

typedef enum fragnet_status {
  FRAGNET_OK = 0,
  FRAGNET_ERR_CONTRACT = 1, /* bad argument, precondition or config */
  FRAGNET_ERR_IO = 2,
  FRAGNET_ERR_FORMAT = 3,   /* malformed image, manifest, checkpoint or CSV */
  FRAGNET_ERR_NUMERIC = 4,  /* non-finite value during training or inference */
  FRAGNET_ERR_INTERNAL = 5
} fragnet_status;

typedef enum fragnet_split { FRAGNET_SPLIT_TRAIN = 0, FRAGNET_SPLIT_VALIDATION = 1 } fragnet_split;

/* Message of the last failed call on this thread; "" after a success. */
FRAGNET_API const char* fragnet_last_error(void);
FRAGNET_API const char* fragnet_version(void);
FRAGNET_API const char* fragnet_status_name(fragnet_status status);
/* Scripting contract: 0 ok, 1 contract/numeric, 2 io/format/internal. */
FRAGNET_API int fragnet_exit_code(fragnet_status status);

typedef struct fragnet_sampler_config {
  size_t frame_side;
  size_t fragment_side;
  size_t gap;
  size_t jitter;
  uint64_t seed;
} fragnet_sampler_config;

/* scale is "desk" or "full". */
FRAGNET_API fragnet_status fragnet_sampler_defaults(const char* scale, fragnet_sampler_config* out);

/* ---- models ---- */

typedef struct fragnet_model_info {
  char fusion[16]; /* "concat" or "kron" */
  size_t input_side;
  size_t feature_dim;
  size_t epoch;
  size_t parameter_count;
} fragnet_model_info;

/* scale: "desk" or "full"; fusion: "concat" or "kron"; input_side 0 keeps
 * the scale's default fragment size. */
FRAGNET_API fragnet_status fragnet_model_create(const char* scale, const char* fusion,
                                                size_t input_side, uint64_t seed,
                                                fragnet_model** out);
FRAGNET_API fragnet_status fragnet_model_load(const char* path, fragnet_model** out);
FRAGNET_API fragnet_status fragnet_model_save(fragnet_model* model, const char* path);
FRAGNET_API void fragnet_model_destroy(fragnet_model* model);
FRAGNET_API fragnet_status fragnet_model_info_get(const fragnet_model* model,
                                                  fragnet_model_info* out);
/* Model config and epoch as JSON. Writes at most `capacity` bytes
 * including the terminator; `needed` receives the full length + 1. */
FRAGNET_API fragnet_status fragnet_model_describe(const fragnet_model* model, char* buffer,
                                                  size_t capacity, size_t* needed);

/* Prepares a loaded model for fine-tuning. When `fusion` is non-NULL and
 * differs from the model's, the head is replaced and *head_reinitialized set.
 * The warning text (if any) is available through fragnet_last_warning(). */
FRAGNET_API fragnet_status fragnet_model_prepare_finetune(fragnet_model* model, const char* fusion,
                                                          uint64_t seed, int* head_reinitialized);
FRAGNET_API const char* fragnet_last_warning(void);

/* ---- data ---- */

/* Writes `count` synthetic images (kind: gradient, checker, blobs) as
 * img_NNNN.ppm into out_dir plus train.manifest and validation.manifest. */
FRAGNET_API fragnet_status fragnet_synth(const char* kind, size_t count, size_t frame_side,
                                         uint64_t seed, const char* out_dir);

/* Opens a folder of PPMs (using its manifests when present) and decodes every
 * image to a frame_side square frame. */
FRAGNET_API fragnet_status fragnet_dataset_open(const char* dir, uint64_t seed, size_t frame_side,
                                                fragnet_dataset** out);
FRAGNET_API size_t fragnet_dataset_size(const fragnet_dataset* dataset, fragnet_split split);
FRAGNET_API void fragnet_dataset_destroy(fragnet_dataset* dataset);

/* ---- training ---- */

typedef struct fragnet_train_config {
  double learning_rate;
  double momentum;
  size_t batch_size;
  size_t epochs;
  uint64_t seed;
  fragnet_sampler_config sampler;
  double stop_at; /* stop once validation accuracy reaches this; <= 0 disables */
} fragnet_train_config;

typedef struct fragnet_metrics {
  size_t epoch;
  double train_loss;
  double validation_accuracy;
} fragnet_metrics;

typedef void (*fragnet_epoch_callback)(const fragnet_metrics* metrics, void* user);

FRAGNET_API void fragnet_train_defaults(fragnet_train_config* out);

/* Trains on the train split and evaluates on the validation split after every
 * epoch. Each record is appended to metrics_csv when it is non-NULL. */
FRAGNET_API fragnet_status fragnet_train(fragnet_model* model, const fragnet_dataset* dataset,
                                         const fragnet_train_config* config,
                                         const char* metrics_csv, fragnet_epoch_callback callback,
                                         void* user);

/* Pair accuracy on one frozen pair per validation image. */
FRAGNET_API fragnet_status fragnet_evaluate(fragnet_model* model, const fragnet_dataset* dataset,
                                            const fragnet_sampler_config* sampler,
                                            double* accuracy);

/* ---- puzzles ---- */

typedef struct fragnet_puzzle_result {
  int perfect;
  size_t correctly_placed;
  double greedy_score;
  double optimal_score; /* only filled with the oracle */
  size_t greedy[8];     /* location class of each non-centre fragment */
  size_t truth[8];
} fragnet_puzzle_result;

typedef struct fragnet_corpus_result {
  size_t puzzles;
  double perfect_rate;
  double fraction_correctly_placed;
  size_t oracle_disagreements; /* puzzles where greedy scored below optimal */
} fragnet_corpus_result;

/* Cuts a 3x3 puzzle from the image (grid RNG seeded with sampler->seed),
 * solves it greedily and optionally writes the reconstruction. */
FRAGNET_API fragnet_status fragnet_solve_image(fragnet_model* model, const char* image_path,
                                               const fragnet_sampler_config* sampler,
                                               int with_oracle, const char* render_path,
                                               fragnet_puzzle_result* out);

/* One puzzle per validation image (puzzle i seeded with sampler->seed ^ i).
 * Writes the per-image CSV report when report_csv is non-NULL. */
FRAGNET_API fragnet_status fragnet_solve_corpus(fragnet_model* model,
                                                const fragnet_dataset* dataset,
                                                const fragnet_sampler_config* sampler,
                                                int with_oracle, const char* report_csv,
                                                fragnet_corpus_result* out);

/* Reconstruction of an image's puzzle. With a NULL model the fragments are
 * placed at their true cells. */
FRAGNET_API fragnet_status fragnet_render(fragnet_model* model, const char* image_path,
                                          const fragnet_sampler_config* sampler,
                                          const char* out_path);

/* ---- diagnostics ---- */

typedef struct fragnet_gradcheck_line {
  const char* name;
  size_t checked;
  size_t failed;
  double worst_error;
} fragnet_gradcheck_line;

typedef void (*fragnet_gradcheck_callback)(const fragnet_gradcheck_line* line, void* user);

/* Finite-difference suite over every op (and the desk network for both
 * fusion kinds when include_network is set). *failed_checks counts failing
 * reports. */
FRAGNET_API fragnet_status fragnet_gradcheck(uint64_t seed, int include_network,
                                             fragnet_gradcheck_callback callback, void* user,
                                             size_t* failed_checks);

/* Merges two metrics logs into "epoch,concat_val_accuracy,kron_val_accuracy". */
FRAGNET_API fragnet_status fragnet_compare_metrics(const char* concat_csv, const char* kron_csv,
                                                   const char* out_csv);

#ifdef __cplusplus
}
#endif

#endif
