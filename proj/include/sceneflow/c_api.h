#ifndef SCENEFLOW_C_API_H
#define SCENEFLOW_C_API_H

/* C interface to the scene-flow library. Every entry point returns an
 * sf_status; on failure sf_last_error_message() describes what went wrong.
 * Strings handed out through char** are heap-allocated and released with
 * sf_string_free. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sf_status {
  SF_OK = 0,
  SF_ERROR_INVALID_ARGUMENT = 1,
  SF_ERROR_IO = 2,
  SF_ERROR_CONFIG = 3,
  SF_ERROR_DEGENERATE_GEOMETRY = 4,
  SF_ERROR_NUMERIC = 5,
  /* The batch ran, but at least one scene failed; the report says which. */
  SF_ERROR_SCENE_FAILED = 6,
  SF_ERROR_INTERNAL = 7
} sf_status;

const char* sf_status_name(sf_status status);

/* Message from the most recent failing call on this thread. Empty when the
 * last call succeeded. Valid until the next API call on the same thread. */
const char* sf_last_error_message(void);

void sf_string_free(char* text);
void sf_buffer_free(double* buffer);

/* ---- configuration ---------------------------------------------------- */

typedef struct sf_config sf_config;

/* All defaults; never fails. */
sf_config* sf_config_create(void);
sf_status sf_config_from_json(const char* json_text, sf_config** out_config);
sf_status sf_config_from_file(const char* path, sf_config** out_config);
/* Merge a partial JSON document over the current values; unknown keys and
 * wrong types are rejected and the config is left unchanged. */
sf_status sf_config_override(sf_config* config, const char* json_text);
sf_status sf_config_to_json(const sf_config* config, char** out_json);
void sf_config_free(sf_config* config);

/* ---- batch drivers ---------------------------------------------------- */

/* Each driver writes its outputs as configured and hands back the full
 * report as JSON. When some scenes fail and others run, the return value
 * is SF_ERROR_SCENE_FAILED and the report is still produced. */
sf_status sf_pipeline_run(const sf_config* config, char** out_report_json);
sf_status sf_pipeline_ablate(const sf_config* config, char** out_report_json);
sf_status sf_flows_evaluate(const sf_config* config, char** out_report_json);
sf_status sf_diagnostics_run(const sf_config* config, char** out_report_json);

/* ---- synthetic data --------------------------------------------------- */

/* Writes `count` scene-pair directories scene_000.. under out_dir.
 * preset: "flat" | "step" | "terrace" | "truck" | "ratio_sweep".
 * params_json may be NULL or empty; recognized keys:
 *   "density_scale": number   point-budget multiplier
 *   "mode": "correlated" | "independent"
 *   "noise_std": number       per-axis sample noise, meters
 *   "dynamic_ratio": number   ratio_sweep preset only
 */
sf_status sf_synth_generate(const char* preset, const char* params_json,
                            uint64_t seed, int count, const char* out_dir);

/* ---- odds and ends ---------------------------------------------------- */

/* Expected number of mutual correspondences that survive when two clouds
 * of total_points each are independently subsampled to sampled_points. */
sf_status sf_expected_correspondences(size_t total_points,
                                      size_t sampled_points,
                                      double* out_value);

/* ---- single scenes ---------------------------------------------------- */

typedef struct sf_scene sf_scene;

sf_status sf_scene_load(const char* dir, sf_scene** out_scene);
sf_status sf_scene_point_count(const sf_scene* scene, size_t* out_count);
/* Runs the configured pipeline on this one scene (seeded exactly like the
 * first scene of a batch). *out_flow_xyz receives 3*N doubles laid out
 * x y z per point; release with sf_buffer_free. */
sf_status sf_scene_estimate_flow(const sf_scene* scene,
                                 const sf_config* config,
                                 double** out_flow_xyz, size_t* out_count);
void sf_scene_free(sf_scene* scene);

#ifdef __cplusplus
}
#endif

#endif /* SCENEFLOW_C_API_H */
