/* Copyright 2026 The FBR Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the FBR library. Every call returns a status; on failure
 * fbr_last_error() holds a message for the calling thread. Strings handed
 * out by the library are released with fbr_string_free. */

#ifndef FBR_FBR_H_
#define FBR_FBR_H_

#include <stddef.h>

#if defined(_WIN32)
#define FBR_API __declspec(dllexport)
#else
#define FBR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fbr_status {
  FBR_OK = 0,
  FBR_ERR_ARGUMENT = 1,
  FBR_ERR_CONFIG = 2,
  FBR_ERR_IO = 3,
  FBR_ERR_CHECKPOINT = 4,
  FBR_ERR_INTERNAL = 5
} fbr_status;

typedef struct fbr_config fbr_config;
typedef struct fbr_dataset fbr_dataset;
typedef struct fbr_trainer fbr_trainer;
typedef struct fbr_model fbr_model;

FBR_API const char* fbr_version(void);
FBR_API const char* fbr_last_error(void);
FBR_API const char* fbr_status_name(fbr_status status);
FBR_API void fbr_string_free(char* s);

/* Configuration. Missing keys take defaults, unknown keys are rejected.
 * A run manifest is accepted in place of a config. */
FBR_API fbr_status fbr_config_parse(const char* json, fbr_config** out);
FBR_API fbr_status fbr_config_load(const char* path, fbr_config** out);
FBR_API fbr_status fbr_config_to_json(const fbr_config* config, char** out);
/* train.steps of the config; 0 for NULL. */
FBR_API size_t fbr_config_steps(const fbr_config* config);
FBR_API void fbr_config_free(fbr_config* config);

/* Synthetic data. split is "train" or "val". */
FBR_API fbr_status fbr_dataset_generate(const fbr_config* config,
                                        const char* split, fbr_dataset** out);
FBR_API size_t fbr_dataset_size(const fbr_dataset* dataset);
/* Writes <dir>/<split>/{NNNNN.ppm, NNNNN_mask.pgm, labels.csv}. */
FBR_API fbr_status fbr_dataset_write(const fbr_dataset* dataset,
                                     const char* dir);
FBR_API void fbr_dataset_free(fbr_dataset* dataset);

/* Training on the config's train split. */
FBR_API fbr_status fbr_trainer_create(const fbr_config* config,
                                      fbr_trainer** out);
/* One step; *trace_json (optional) receives the step trace. */
FBR_API fbr_status fbr_trainer_step(fbr_trainer* trainer, char** trace_json);
/* `steps` steps; each trace is appended as a line to log_path if not NULL. */
FBR_API fbr_status fbr_trainer_run(fbr_trainer* trainer, size_t steps,
                                   const char* log_path);
FBR_API size_t fbr_trainer_steps_done(const fbr_trainer* trainer);
FBR_API size_t fbr_trainer_bank_size(const fbr_trainer* trainer);
FBR_API fbr_status fbr_trainer_save(const fbr_trainer* trainer,
                                    const char* checkpoint_path);
/* Snapshot of the current weights. */
FBR_API fbr_status fbr_trainer_model(const fbr_trainer* trainer,
                                     fbr_model** out);
FBR_API void fbr_trainer_free(fbr_trainer* trainer);

/* Models. */
FBR_API fbr_status fbr_model_create(const fbr_config* config, fbr_model** out);
FBR_API fbr_status fbr_model_load(const fbr_config* config,
                                  const char* checkpoint_path,
                                  fbr_model** out);
/* Seeds, metrics.json, trimap.csv and boundary_f.csv under out_dir, seed
 * maps as out_dir/seeds/NNNNN.pgm. *metrics_json (optional) receives the
 * report. */
FBR_API fbr_status fbr_model_evaluate(const fbr_model* model,
                                      const fbr_dataset* dataset,
                                      const char* out_dir,
                                      char** metrics_json);
/* One CSV row per kept feature-grid pixel (every stride-th row and column):
 * image,row,col,label,f0..f{D-1} from the foreground projection head. */
FBR_API fbr_status fbr_model_export_embeddings(const fbr_model* model,
                                               const fbr_dataset* dataset,
                                               const char* csv_path,
                                               size_t stride);
FBR_API void fbr_model_free(fbr_model* model);

/* Run manifest: config with defaults, root and derived seeds, version and
 * the given artifact paths (n role/path pairs). */
FBR_API fbr_status fbr_manifest_write(const fbr_config* config,
                                      const char* path,
                                      const char* const* roles,
                                      const char* const* paths, size_t n);

#ifdef __cplusplus
}
#endif

#endif /* FBR_FBR_H_ */
