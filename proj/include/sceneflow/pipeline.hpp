#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sceneflow/eval.hpp"
#include "sceneflow/flow.hpp"
#include "sceneflow/ground.hpp"
#include "sceneflow/icp.hpp"
#include "sceneflow/refine.hpp"
#include "sceneflow/types.hpp"

namespace sceneflow {

struct PipelineConfig {
  // Stage toggles. With motion compensation off, the residual flow is the
  // total flow.
  bool motion_compensation = true;
  bool ground_removal = true;
  bool rigid_refinement = true;

  double crop_half_extent = 35.0;
  double dynamic_speed_threshold = 0.5;  // m/s, evaluation strata

  IcpConfig icp;
  GroundFitConfig ground;
  FlowOptConfig flow;
  RefineConfig refine;

  std::string input_dir;
  std::string output_dir;
  int workers = 1;
  bool dump_intermediate = false;
  std::uint64_t seed = 0;

  // Diagnostics-report sampling query, reported alongside scene stats.
  std::size_t diag_total_points = 90000;
  std::size_t diag_sampled_points = 8192;

  void validate() const;
  std::string to_json() const;  // every field, current values
  static PipelineConfig from_json(const std::string& text);
  static PipelineConfig from_file(const std::filesystem::path& path);
};

// Everything the pipeline produced for one scene pair, before any file is
// written. flow covers every input point of cloud_t.
struct SceneOutput {
  FlowField flow;
  GroundMask ground_mask;             // over cloud_t; false when removal off
  std::vector<std::int32_t> clusters; // over cloud_t; -1 = none
  FlowField backbone_flow;            // pre-refinement total flow
  RigidTransform ego_used;
  bool ego_from_icp = false;
  std::optional<MetricsReport> metrics;  // when ground truth exists
  MetricsAccumulator metric_sums;        // same data, mergeable
};

// The full per-scene computation: crop, ground removal, motion
// compensation, flow optimization, rigid refinement, flow composition,
// ego fill-in for removed points, metrics against whatever ground truth
// the pair carries.
SceneOutput process_scene(const ScenePair& pair, const PipelineConfig& cfg,
                          std::uint64_t scene_seed);

struct SceneSummary {
  std::string name;
  bool ok = false;
  std::string error;
  std::optional<MetricsReport> metrics;
};

struct PipelineReport {
  std::vector<SceneSummary> scenes;
  std::size_t failed = 0;
  MetricsReport aggregate;  // micro-average over all evaluated points

  std::string to_json() const;
};

// Batch driver: reads every scene under cfg.input_dir, writes flow.bin
// (and optional intermediates) under cfg.output_dir, aggregates metrics.
// Results are independent of cfg.workers.
PipelineReport run_pipeline(const PipelineConfig& cfg);

struct AblationReport {
  // Variant order: backbone, +motion, full.
  std::vector<std::string> variant_names;
  std::vector<MetricsReport> aggregates;
  std::vector<SceneSummary> scenes;  // per-scene status (shared across variants)
  std::size_t failed = 0;

  std::string to_json() const;
};

// Runs the three-variant ablation over the same scenes: flow only,
// flow+motion, flow+motion+refinement. Preprocessing and the compensated
// flow optimization are shared between the last two variants.
AblationReport run_ablation(const PipelineConfig& cfg);

struct DiagnosticsReport {
  struct SceneRow {
    std::string name;
    std::size_t points_t = 0;
    std::size_t points_t1 = 0;
    double chamfer_violation = 0.0;
    double dynamic_ratio = 0.0;
  };
  std::vector<SceneRow> scenes;
  double expected_correspondences_value = 0.0;
  std::vector<std::size_t> dynamic_ratio_histogram;  // 10 bins over [0,1]

  std::string to_json() const;
};

// Ground-truth dataset diagnostics over cfg.input_dir.
DiagnosticsReport run_diagnostics(const PipelineConfig& cfg);

// Re-scores already-written flow files (output_dir/<scene>/flow.bin)
// against the ground truth in input_dir.
PipelineReport evaluate_outputs(const PipelineConfig& cfg);

}  // namespace sceneflow
