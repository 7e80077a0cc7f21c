#include "sceneflow/c_api.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <new>
#include <string>

#include <nlohmann/json.hpp>

#include "sceneflow/errors.hpp"
#include "sceneflow/eval.hpp"
#include "sceneflow/io.hpp"
#include "sceneflow/pipeline.hpp"
#include "sceneflow/rng.hpp"
#include "sceneflow/synth.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

struct sf_config {
  sceneflow::PipelineConfig cfg;
};

struct sf_scene {
  sceneflow::ScenePair pair;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& text) {
  char* out = static_cast<char*>(std::malloc(text.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

// Runs the body, translating exceptions into status codes and the
// thread-local message.
template <typename Fn>
sf_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    return fn();
  } catch (const sceneflow::InvalidArgumentError& e) {
    g_last_error = e.what();
    return SF_ERROR_INVALID_ARGUMENT;
  } catch (const sceneflow::IoError& e) {
    g_last_error = e.what();
    return SF_ERROR_IO;
  } catch (const sceneflow::ConfigError& e) {
    g_last_error = e.what();
    return SF_ERROR_CONFIG;
  } catch (const sceneflow::DegenerateGeometryError& e) {
    g_last_error = e.what();
    return SF_ERROR_DEGENERATE_GEOMETRY;
  } catch (const sceneflow::NumericError& e) {
    g_last_error = e.what();
    return SF_ERROR_NUMERIC;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SF_ERROR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return SF_ERROR_INTERNAL;
  }
}

sf_status require(bool ok, const char* what) {
  if (ok) return SF_OK;
  g_last_error = what;
  return SF_ERROR_INVALID_ARGUMENT;
}

// Objects merge key by key, everything else is replaced. Unknown keys are
// kept so that the config parser can reject them with a clear message.
void merge_json(json& base, const json& patch) {
  if (!base.is_object() || !patch.is_object()) {
    base = patch;
    return;
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (base.contains(it.key())) {
      merge_json(base[it.key()], it.value());
    } else {
      base[it.key()] = it.value();
    }
  }
}

template <typename Report>
sf_status finish_batch(const Report& report, char** out_report_json) {
  *out_report_json = dup_string(report.to_json());
  if (report.failed > 0) {
    g_last_error = std::to_string(report.failed) + " scene(s) failed";
    return SF_ERROR_SCENE_FAILED;
  }
  return SF_OK;
}

}  // namespace

extern "C" {

const char* sf_status_name(sf_status status) {
  switch (status) {
    case SF_OK: return "ok";
    case SF_ERROR_INVALID_ARGUMENT: return "invalid_argument";
    case SF_ERROR_IO: return "io_error";
    case SF_ERROR_CONFIG: return "config_error";
    case SF_ERROR_DEGENERATE_GEOMETRY: return "degenerate_geometry";
    case SF_ERROR_NUMERIC: return "numeric_error";
    case SF_ERROR_SCENE_FAILED: return "scene_failed";
    case SF_ERROR_INTERNAL: return "internal_error";
  }
  return "unknown_status";
}

const char* sf_last_error_message(void) { return g_last_error.c_str(); }

void sf_string_free(char* text) { std::free(text); }
void sf_buffer_free(double* buffer) { std::free(buffer); }

sf_config* sf_config_create(void) { return new (std::nothrow) sf_config(); }

sf_status sf_config_from_json(const char* json_text, sf_config** out_config) {
  return guarded([&] {
    sf_status bad = require(json_text && out_config,
                            "sf_config_from_json: null argument");
    if (bad != SF_OK) return bad;
    auto cfg = std::make_unique<sf_config>();
    cfg->cfg = sceneflow::PipelineConfig::from_json(json_text);
    *out_config = cfg.release();
    return SF_OK;
  });
}

sf_status sf_config_from_file(const char* path, sf_config** out_config) {
  return guarded([&] {
    sf_status bad =
        require(path && out_config, "sf_config_from_file: null argument");
    if (bad != SF_OK) return bad;
    auto cfg = std::make_unique<sf_config>();
    cfg->cfg = sceneflow::PipelineConfig::from_file(path);
    *out_config = cfg.release();
    return SF_OK;
  });
}

sf_status sf_config_override(sf_config* config, const char* json_text) {
  return guarded([&] {
    sf_status bad =
        require(config && json_text, "sf_config_override: null argument");
    if (bad != SF_OK) return bad;
    json merged;
    try {
      merged = json::parse(config->cfg.to_json());
      merge_json(merged, json::parse(json_text));
    } catch (const json::exception& e) {
      throw sceneflow::ConfigError(std::string("override is not valid JSON: ") +
                                   e.what());
    }
    config->cfg = sceneflow::PipelineConfig::from_json(merged.dump());
    return SF_OK;
  });
}

sf_status sf_config_to_json(const sf_config* config, char** out_json) {
  return guarded([&] {
    sf_status bad =
        require(config && out_json, "sf_config_to_json: null argument");
    if (bad != SF_OK) return bad;
    *out_json = dup_string(config->cfg.to_json());
    return SF_OK;
  });
}

void sf_config_free(sf_config* config) { delete config; }

sf_status sf_pipeline_run(const sf_config* config, char** out_report_json) {
  return guarded([&] {
    sf_status bad = require(config && out_report_json,
                            "sf_pipeline_run: null argument");
    if (bad != SF_OK) return bad;
    return finish_batch(sceneflow::run_pipeline(config->cfg),
                        out_report_json);
  });
}

sf_status sf_pipeline_ablate(const sf_config* config,
                             char** out_report_json) {
  return guarded([&] {
    sf_status bad = require(config && out_report_json,
                            "sf_pipeline_ablate: null argument");
    if (bad != SF_OK) return bad;
    return finish_batch(sceneflow::run_ablation(config->cfg),
                        out_report_json);
  });
}

sf_status sf_flows_evaluate(const sf_config* config, char** out_report_json) {
  return guarded([&] {
    sf_status bad = require(config && out_report_json,
                            "sf_flows_evaluate: null argument");
    if (bad != SF_OK) return bad;
    return finish_batch(sceneflow::evaluate_outputs(config->cfg),
                        out_report_json);
  });
}

sf_status sf_diagnostics_run(const sf_config* config,
                             char** out_report_json) {
  return guarded([&] {
    sf_status bad = require(config && out_report_json,
                            "sf_diagnostics_run: null argument");
    if (bad != SF_OK) return bad;
    const sceneflow::DiagnosticsReport report =
        sceneflow::run_diagnostics(config->cfg);
    *out_report_json = dup_string(report.to_json());
    return SF_OK;
  });
}

sf_status sf_synth_generate(const char* preset, const char* params_json,
                            uint64_t seed, int count, const char* out_dir) {
  return guarded([&] {
    sf_status bad =
        require(preset && out_dir, "sf_synth_generate: null argument");
    if (bad != SF_OK) return bad;
    if (count <= 0) {
      throw sceneflow::InvalidArgumentError(
          "sf_synth_generate: count must be positive");
    }

    double density_scale = 0.0;  // 0 = keep preset value
    double noise_std = -1.0;     // <0 = keep preset value
    double dynamic_ratio = 0.3;
    bool independent = false, mode_given = false;
    if (params_json && params_json[0] != '\0') {
      json params;
      try {
        params = json::parse(params_json);
      } catch (const json::exception& e) {
        throw sceneflow::ConfigError(
            std::string("synth params are not valid JSON: ") + e.what());
      }
      if (!params.is_object()) {
        throw sceneflow::ConfigError("synth params must be a JSON object");
      }
      try {
        for (auto it = params.begin(); it != params.end(); ++it) {
          const std::string& key = it.key();
          if (key == "density_scale") {
            density_scale = it.value().get<double>();
          } else if (key == "noise_std") {
            noise_std = it.value().get<double>();
          } else if (key == "dynamic_ratio") {
            dynamic_ratio = it.value().get<double>();
          } else if (key == "mode") {
            const std::string mode = it.value().get<std::string>();
            if (mode == "independent") independent = true;
            else if (mode == "correlated") independent = false;
            else {
              throw sceneflow::ConfigError(
                  "synth params: mode must be correlated or independent");
            }
            mode_given = true;
          } else {
            throw sceneflow::ConfigError("unknown synth param '" + key + "'");
          }
        }
      } catch (const json::exception& e) {
        throw sceneflow::ConfigError(
            std::string("synth param has the wrong type: ") + e.what());
      }
    }

    const std::string name = preset;
    for (int i = 0; i < count; ++i) {
      const std::uint64_t scene_seed =
          sceneflow::derive_seed(seed, static_cast<std::uint64_t>(i));
      sceneflow::SceneSpec spec;
      if (name == "flat") spec = sceneflow::preset_flat(scene_seed);
      else if (name == "step") spec = sceneflow::preset_step(scene_seed);
      else if (name == "terrace") spec = sceneflow::preset_terrace(scene_seed);
      else if (name == "truck") {
        spec = sceneflow::preset_truck_occlusion(scene_seed);
      } else if (name == "ratio_sweep") {
        spec = sceneflow::preset_ratio_sweep(dynamic_ratio, scene_seed);
      } else {
        throw sceneflow::InvalidArgumentError("unknown preset '" + name +
                                              "'");
      }
      if (density_scale > 0.0) spec.density_scale = density_scale;
      if (noise_std >= 0.0) spec.noise_std = noise_std;
      if (mode_given) {
        spec.mode = independent ? sceneflow::ResampleMode::Independent
                                : sceneflow::ResampleMode::Correlated;
      }

      char dir_name[32];
      std::snprintf(dir_name, sizeof dir_name, "scene_%03d", i);
      sceneflow::io::write_scene_pair(fs::path(out_dir) / dir_name,
                                      sceneflow::generate(spec));
    }
    return SF_OK;
  });
}

sf_status sf_expected_correspondences(size_t total_points,
                                      size_t sampled_points,
                                      double* out_value) {
  return guarded([&] {
    sf_status bad =
        require(out_value != nullptr,
                "sf_expected_correspondences: null output");
    if (bad != SF_OK) return bad;
    *out_value =
        sceneflow::expected_correspondences(total_points, sampled_points);
    return SF_OK;
  });
}

sf_status sf_scene_load(const char* dir, sf_scene** out_scene) {
  return guarded([&] {
    sf_status bad =
        require(dir && out_scene, "sf_scene_load: null argument");
    if (bad != SF_OK) return bad;
    auto scene = std::make_unique<sf_scene>();
    scene->pair = sceneflow::io::read_scene_pair(dir);
    *out_scene = scene.release();
    return SF_OK;
  });
}

sf_status sf_scene_point_count(const sf_scene* scene, size_t* out_count) {
  return guarded([&] {
    sf_status bad =
        require(scene && out_count, "sf_scene_point_count: null argument");
    if (bad != SF_OK) return bad;
    *out_count = scene->pair.cloud_t.size();
    return SF_OK;
  });
}

sf_status sf_scene_estimate_flow(const sf_scene* scene,
                                 const sf_config* config,
                                 double** out_flow_xyz, size_t* out_count) {
  return guarded([&] {
    sf_status bad = require(scene && config && out_flow_xyz && out_count,
                            "sf_scene_estimate_flow: null argument");
    if (bad != SF_OK) return bad;
    const sceneflow::SceneOutput out = sceneflow::process_scene(
        scene->pair, config->cfg, sceneflow::derive_seed(config->cfg.seed, 0));
    const std::size_t n = out.flow.size();
    double* buffer =
        static_cast<double*>(std::malloc(sizeof(double) * 3 * n));
    if (!buffer) throw std::bad_alloc();
    for (std::size_t i = 0; i < n; ++i) {
      buffer[3 * i + 0] = out.flow.vectors[i].x();
      buffer[3 * i + 1] = out.flow.vectors[i].y();
      buffer[3 * i + 2] = out.flow.vectors[i].z();
    }
    *out_flow_xyz = buffer;
    *out_count = n;
    return SF_OK;
  });
}

void sf_scene_free(sf_scene* scene) { delete scene; }

}  // extern "C"
