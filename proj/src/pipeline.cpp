#include "sceneflow/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "sceneflow/errors.hpp"
#include "sceneflow/geometry.hpp"
#include "sceneflow/io.hpp"
#include "sceneflow/rng.hpp"

namespace sceneflow {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_known_keys(const json& j, const char* section,
                      std::initializer_list<const char*> known) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(known.begin(), known.end(), [&](const char* k) {
          return key == k;
        }) == known.end()) {
      throw ConfigError(std::string("unknown config key '") + key + "' in " +
                        section);
    }
  }
}

}  // namespace

void PipelineConfig::validate() const {
  if (crop_half_extent <= 0) {
    throw ConfigError("config: crop_half_extent must be > 0");
  }
  if (dynamic_speed_threshold <= 0) {
    throw ConfigError("config: dynamic_speed_threshold must be > 0");
  }
  if (workers < 1) throw ConfigError("config: workers must be >= 1");
  if (diag_total_points == 0 || diag_sampled_points > diag_total_points) {
    throw ConfigError("config: bad diagnostics sampling query");
  }
  try {
    icp.validate();
    ground.validate();
    flow.validate();
    refine.validate();
  } catch (const InvalidArgumentError& e) {
    throw ConfigError(e.what());
  }
}

std::string PipelineConfig::to_json() const {
  json j;
  j["stages"] = {{"motion_compensation", motion_compensation},
                 {"ground_removal", ground_removal},
                 {"rigid_refinement", rigid_refinement}};
  j["crop_half_extent"] = crop_half_extent;
  j["dynamic_speed_threshold"] = dynamic_speed_threshold;
  j["icp"] = {{"max_iterations", icp.max_iterations},
              {"correspondence_cutoff", icp.correspondence_cutoff},
              {"convergence_threshold", icp.convergence_threshold},
              {"voxel_size", icp.voxel_size}};
  j["ground"] = {{"hidden", ground.hidden},
                 {"learning_rate", ground.learning_rate},
                 {"iterations", ground.iterations},
                 {"huber_delta", ground.huber_delta},
                 {"removal_band", ground.removal_band},
                 {"coord_scale", ground.coord_scale}};
  j["flow"] = {{"learning_rate", flow.learning_rate},
               {"patience", flow.patience},
               {"max_iterations", flow.max_iterations},
               {"truncation", flow.truncation},
               {"improvement_epsilon", flow.improvement_epsilon},
               {"hidden", flow.hidden}};
  j["refine"] = {{"ransac_iterations", refine.ransac_iterations},
                 {"inlier_threshold", refine.inlier_threshold},
                 {"dbscan_epsilon", refine.dbscan_epsilon},
                 {"dbscan_min_points", refine.dbscan_min_points},
                 {"static_speed_threshold", refine.static_speed_threshold}};
  j["input_dir"] = input_dir;
  j["output_dir"] = output_dir;
  j["workers"] = workers;
  j["dump_intermediate"] = dump_intermediate;
  j["seed"] = seed;
  j["diagnostics"] = {{"total_points", diag_total_points},
                      {"sampled_points", diag_sampled_points}};
  return j.dump(2);
}

PipelineConfig PipelineConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");

  check_known_keys(j, "config",
                   {"stages", "crop_half_extent", "dynamic_speed_threshold",
                    "icp", "ground", "flow", "refine", "input_dir",
                    "output_dir", "workers", "dump_intermediate", "seed",
                    "diagnostics"});

  PipelineConfig cfg;
  try {
    if (j.contains("stages")) {
      const json& s = j["stages"];
      check_known_keys(s, "stages",
                       {"motion_compensation", "ground_removal",
                        "rigid_refinement"});
      cfg.motion_compensation =
          s.value("motion_compensation", cfg.motion_compensation);
      cfg.ground_removal = s.value("ground_removal", cfg.ground_removal);
      cfg.rigid_refinement = s.value("rigid_refinement", cfg.rigid_refinement);
    }
    cfg.crop_half_extent = j.value("crop_half_extent", cfg.crop_half_extent);
    cfg.dynamic_speed_threshold =
        j.value("dynamic_speed_threshold", cfg.dynamic_speed_threshold);
    if (j.contains("icp")) {
      const json& s = j["icp"];
      check_known_keys(s, "icp",
                       {"max_iterations", "correspondence_cutoff",
                        "convergence_threshold", "voxel_size"});
      cfg.icp.max_iterations = s.value("max_iterations", cfg.icp.max_iterations);
      cfg.icp.correspondence_cutoff =
          s.value("correspondence_cutoff", cfg.icp.correspondence_cutoff);
      cfg.icp.convergence_threshold =
          s.value("convergence_threshold", cfg.icp.convergence_threshold);
      cfg.icp.voxel_size = s.value("voxel_size", cfg.icp.voxel_size);
    }
    if (j.contains("ground")) {
      const json& s = j["ground"];
      check_known_keys(s, "ground",
                       {"hidden", "learning_rate", "iterations", "huber_delta",
                        "removal_band", "coord_scale"});
      cfg.ground.hidden = s.value("hidden", cfg.ground.hidden);
      cfg.ground.learning_rate =
          s.value("learning_rate", cfg.ground.learning_rate);
      cfg.ground.iterations = s.value("iterations", cfg.ground.iterations);
      cfg.ground.huber_delta = s.value("huber_delta", cfg.ground.huber_delta);
      cfg.ground.removal_band =
          s.value("removal_band", cfg.ground.removal_band);
      cfg.ground.coord_scale = s.value("coord_scale", cfg.ground.coord_scale);
    }
    if (j.contains("flow")) {
      const json& s = j["flow"];
      check_known_keys(s, "flow",
                       {"learning_rate", "patience", "max_iterations",
                        "truncation", "improvement_epsilon", "hidden"});
      cfg.flow.learning_rate = s.value("learning_rate", cfg.flow.learning_rate);
      cfg.flow.patience = s.value("patience", cfg.flow.patience);
      cfg.flow.max_iterations =
          s.value("max_iterations", cfg.flow.max_iterations);
      cfg.flow.truncation = s.value("truncation", cfg.flow.truncation);
      cfg.flow.improvement_epsilon =
          s.value("improvement_epsilon", cfg.flow.improvement_epsilon);
      cfg.flow.hidden = s.value("hidden", cfg.flow.hidden);
    }
    if (j.contains("refine")) {
      const json& s = j["refine"];
      check_known_keys(s, "refine",
                       {"ransac_iterations", "inlier_threshold",
                        "dbscan_epsilon", "dbscan_min_points",
                        "static_speed_threshold"});
      cfg.refine.ransac_iterations =
          s.value("ransac_iterations", cfg.refine.ransac_iterations);
      cfg.refine.inlier_threshold =
          s.value("inlier_threshold", cfg.refine.inlier_threshold);
      cfg.refine.dbscan_epsilon =
          s.value("dbscan_epsilon", cfg.refine.dbscan_epsilon);
      cfg.refine.dbscan_min_points =
          s.value("dbscan_min_points", cfg.refine.dbscan_min_points);
      cfg.refine.static_speed_threshold =
          s.value("static_speed_threshold", cfg.refine.static_speed_threshold);
    }
    cfg.input_dir = j.value("input_dir", cfg.input_dir);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.workers = j.value("workers", cfg.workers);
    cfg.dump_intermediate = j.value("dump_intermediate", cfg.dump_intermediate);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("diagnostics")) {
      const json& s = j["diagnostics"];
      check_known_keys(s, "diagnostics", {"total_points", "sampled_points"});
      cfg.diag_total_points = s.value("total_points", cfg.diag_total_points);
      cfg.diag_sampled_points =
          s.value("sampled_points", cfg.diag_sampled_points);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field has the wrong type: ") +
                      e.what());
  }
  cfg.validate();
  return cfg;
}

PipelineConfig PipelineConfig::from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json(text);
}

namespace {

// Seed-stream tags for the independent random decisions inside one scene.
constexpr std::uint64_t kSeedGroundT = 10;
constexpr std::uint64_t kSeedGroundT1 = 11;
constexpr std::uint64_t kSeedFlow = 20;
constexpr std::uint64_t kSeedFlowBackbone = 21;
constexpr std::uint64_t kSeedRefine = 30;

struct Prepared {
  CropResult crop_t, crop_t1;
  PointCloud nonground_t, nonground_t1;
  std::vector<std::size_t> map_t;  // nonground_t row -> input cloud_t row
  GroundMask mask_t;               // over the full input cloud_t
};

Prepared prepare(const ScenePair& pair, const PipelineConfig& cfg,
                 std::uint64_t scene_seed) {
  pair.validate();
  Prepared prep;
  prep.crop_t = crop_to_square(pair.cloud_t, cfg.crop_half_extent);
  prep.crop_t1 = crop_to_square(pair.cloud_t1, cfg.crop_half_extent);
  if (prep.crop_t.cloud.empty() || prep.crop_t1.cloud.empty()) {
    throw InvalidArgumentError("scene has no points inside the crop region");
  }

  prep.mask_t.assign(pair.cloud_t.size(), false);
  if (cfg.ground_removal) {
    GroundRemovalResult gr_t = remove_ground(
        prep.crop_t.cloud, derive_seed(scene_seed, kSeedGroundT), cfg.ground);
    GroundRemovalResult gr_t1 =
        remove_ground(prep.crop_t1.cloud,
                      derive_seed(scene_seed, kSeedGroundT1), cfg.ground);
    prep.nonground_t = std::move(gr_t.non_ground);
    prep.nonground_t1 = std::move(gr_t1.non_ground);
    prep.map_t.reserve(prep.nonground_t.size());
    for (std::size_t row : gr_t.index_map) {
      prep.map_t.push_back(prep.crop_t.index_map[row]);
    }
    for (std::size_t row = 0; row < gr_t.mask.size(); ++row) {
      if (gr_t.mask[row]) prep.mask_t[prep.crop_t.index_map[row]] = true;
    }
  } else {
    prep.nonground_t = prep.crop_t.cloud;
    prep.nonground_t1 = prep.crop_t1.cloud;
    prep.map_t = prep.crop_t.index_map;
  }
  if (prep.nonground_t.empty() || prep.nonground_t1.empty()) {
    throw InvalidArgumentError("scene is empty after ground removal");
  }
  return prep;
}

// Ground-truth labels for metric computation: prefer per-point ground
// truth, fall back to generating labels from tracks. Stratified metrics
// need the ego motion; without it no scores are produced.
struct SceneTruth {
  FlowField labels;
  std::vector<bool> validity;
  std::vector<PointClass> classes;
  bool available = false;
};

SceneTruth scene_truth(const ScenePair& pair, const PipelineConfig& cfg,
                       const std::vector<std::size_t>& crop_index_map) {
  SceneTruth truth;
  if (!pair.ego_motion) return truth;
  if (pair.gt_flow) {
    truth.labels = *pair.gt_flow;
    truth.validity.assign(pair.cloud_t.size(), true);
  } else if (!pair.tracks_t.empty() || !pair.tracks_t1.empty()) {
    LabelResult lr = generate_flow_labels(pair);
    truth.labels = std::move(lr.flow);
    truth.validity = std::move(lr.valid);
  } else {
    return truth;
  }
  truth.classes = classify_points(pair, truth.labels,
                                  cfg.dynamic_speed_threshold, &truth.validity);

  // Scores cover the crop region only; everything outside is marked
  // invalid rather than dropped so the vectors stay index-aligned.
  std::vector<bool> in_crop(pair.cloud_t.size(), false);
  for (std::size_t i : crop_index_map) in_crop[i] = true;
  for (std::size_t i = 0; i < truth.validity.size(); ++i) {
    if (!in_crop[i]) truth.validity[i] = false;
  }
  truth.available = true;
  return truth;
}

FlowField scatter_flow(const FlowField& dense, std::size_t n,
                       const std::vector<std::size_t>& map,
                       const PointCloud& cloud, const RigidTransform& fill) {
  // Points that never reached the optimizer (ground, outside crop) get the
  // ego-motion-induced flow; with compensation off this is exactly zero.
  FlowField out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.vectors[i] = fill.apply(cloud.points[i]) - cloud.points[i];
  }
  for (std::size_t k = 0; k < dense.size(); ++k) {
    out.vectors[map[k]] = dense.vectors[k];
  }
  return out;
}

}  // namespace

SceneOutput process_scene(const ScenePair& pair, const PipelineConfig& cfg,
                          std::uint64_t scene_seed) {
  Prepared prep = prepare(pair, cfg, scene_seed);
  const std::size_t n = pair.cloud_t.size();

  SceneOutput out;
  out.ground_mask = prep.mask_t;
  out.clusters.assign(n, -1);

  RigidTransform t;  // identity when compensation is disabled
  if (cfg.motion_compensation) {
    if (pair.ego_motion) {
      t = *pair.ego_motion;
    } else {
      t = estimate_ego_motion(prep.nonground_t, prep.nonground_t1, cfg.icp);
      out.ego_from_icp = true;
    }
  }
  out.ego_used = t;
  const PointCloud compensated = apply_transform(prep.nonground_t, t);

  FlowOptConfig flow_cfg = cfg.flow;
  flow_cfg.seed = derive_seed(scene_seed, kSeedFlow);
  const FlowOptResult opt =
      optimize_flow(compensated, prep.nonground_t1, flow_cfg);

  FlowField residual = opt.flow;
  if (cfg.rigid_refinement) {
    RefineConfig refine_cfg = cfg.refine;
    refine_cfg.delta_t = pair.delta_t;
    refine_cfg.seed = derive_seed(scene_seed, kSeedRefine);
    RefineResult rr = refine_flow(compensated, residual, refine_cfg);
    for (std::size_t k = 0; k < prep.map_t.size(); ++k) {
      out.clusters[prep.map_t[k]] = rr.clusters.labels[k];
    }
    out.backbone_flow =
        scatter_flow(compose_total_flow(prep.nonground_t, t, residual), n,
                     prep.map_t, pair.cloud_t, t);
    residual = std::move(rr.flow);
  }

  const FlowField total = compose_total_flow(prep.nonground_t, t, residual);
  out.flow = scatter_flow(total, n, prep.map_t, pair.cloud_t, t);
  if (!cfg.rigid_refinement) out.backbone_flow = out.flow;

  const SceneTruth truth = scene_truth(pair, cfg, prep.crop_t.index_map);
  if (truth.available) {
    out.metric_sums.add(out.flow, truth.labels, truth.classes,
                        &truth.validity);
    out.metrics = out.metric_sums.report();
  }
  return out;
}

namespace {

json metrics_json(const MetricsReport& report) {
  return json::parse(report.to_json());
}

struct SceneSlot {
  bool ok = false;
  std::string error;
  SceneOutput output;
};

// Fan scenes out to a small thread pool; per-scene seeds come from the
// scene index so the answer does not depend on the worker count.
template <typename Fn>
void for_each_scene(std::size_t count, int workers, Fn&& fn) {
  const int n_threads =
      std::max(1, std::min<int>(workers, static_cast<int>(count)));
  if (n_threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  // An exception escaping a std::thread body would terminate the process;
  // stash the first one and rethrow it on the calling thread instead.
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_threads));
  for (int w = 0; w < n_threads; ++w) {
    pool.emplace_back([&]() {
      for (std::size_t i = next.fetch_add(1); i < count;
           i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

PipelineReport run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  if (cfg.output_dir.empty()) {
    throw ConfigError("run_pipeline: output_dir is required");
  }
  const auto dirs = io::list_scene_dirs(cfg.input_dir);
  if (dirs.empty()) {
    throw IoError("no scene directories under " + cfg.input_dir);
  }

  std::vector<SceneSlot> slots(dirs.size());
  for_each_scene(dirs.size(), cfg.workers, [&](std::size_t i) {
    try {
      const ScenePair pair = io::read_scene_pair(dirs[i]);
      slots[i].output =
          process_scene(pair, cfg, derive_seed(cfg.seed, i));
      slots[i].ok = true;
    } catch (const std::exception& e) {
      slots[i].error = e.what();
    }
  });

  PipelineReport report;
  MetricsAccumulator aggregate;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    SceneSummary summary;
    summary.name = dirs[i].filename().string();
    summary.ok = slots[i].ok;
    summary.error = slots[i].error;
    if (slots[i].ok) {
      const fs::path scene_out = fs::path(cfg.output_dir) / summary.name;
      fs::create_directories(scene_out);
      io::write_flow_bin(scene_out / "flow.bin", slots[i].output.flow);
      if (cfg.dump_intermediate) {
        io::write_mask_bin(scene_out / "ground_mask.bin",
                           slots[i].output.ground_mask);
        io::write_labels_bin(scene_out / "clusters.bin",
                             slots[i].output.clusters);
        io::write_flow_bin(scene_out / "flow_backbone.bin",
                           slots[i].output.backbone_flow);
      }
      if (slots[i].output.metrics) {
        summary.metrics = slots[i].output.metrics;
        aggregate.merge(slots[i].output.metric_sums);
      }
    } else {
      ++report.failed;
    }
    report.scenes.push_back(std::move(summary));
  }
  report.aggregate = aggregate.report();
  return report;
}

std::string PipelineReport::to_json() const {
  json j;
  j["scenes"] = json::array();
  for (const auto& s : scenes) {
    json row;
    row["name"] = s.name;
    row["ok"] = s.ok;
    if (!s.ok) row["error"] = s.error;
    if (s.metrics) row["metrics"] = metrics_json(*s.metrics);
    j["scenes"].push_back(std::move(row));
  }
  j["failed"] = failed;
  j["aggregate"] = metrics_json(aggregate);
  return j.dump(2);
}

AblationReport run_ablation(const PipelineConfig& cfg) {
  cfg.validate();
  const auto dirs = io::list_scene_dirs(cfg.input_dir);
  if (dirs.empty()) {
    throw IoError("no scene directories under " + cfg.input_dir);
  }

  constexpr int kVariants = 3;
  struct AblationSlot {
    bool ok = false;
    std::string error;
    MetricsAccumulator sums[kVariants];
    bool scored = false;
  };
  std::vector<AblationSlot> slots(dirs.size());

  for_each_scene(dirs.size(), cfg.workers, [&](std::size_t i) {
    AblationSlot& slot = slots[i];
    try {
      const ScenePair pair = io::read_scene_pair(dirs[i]);
      const std::uint64_t scene_seed = derive_seed(cfg.seed, i);
      Prepared prep = prepare(pair, cfg, scene_seed);
      const std::size_t n = pair.cloud_t.size();

      const SceneTruth truth = scene_truth(pair, cfg, prep.crop_t.index_map);

      // Backbone: flow optimization straight on the cropped, ground-
      // removed clouds.
      FlowOptConfig backbone_cfg = cfg.flow;
      backbone_cfg.seed = derive_seed(scene_seed, kSeedFlowBackbone);
      const FlowOptResult backbone =
          optimize_flow(prep.nonground_t, prep.nonground_t1, backbone_cfg);
      const FlowField backbone_total = scatter_flow(
          backbone.flow, n, prep.map_t, pair.cloud_t, RigidTransform());

      // Motion-compensated variant, shared with the full pipeline.
      RigidTransform t;
      if (pair.ego_motion) {
        t = *pair.ego_motion;
      } else {
        t = estimate_ego_motion(prep.nonground_t, prep.nonground_t1, cfg.icp);
      }
      const PointCloud compensated = apply_transform(prep.nonground_t, t);
      FlowOptConfig flow_cfg = cfg.flow;
      flow_cfg.seed = derive_seed(scene_seed, kSeedFlow);
      const FlowOptResult opt =
          optimize_flow(compensated, prep.nonground_t1, flow_cfg);
      const FlowField motion_total = scatter_flow(
          compose_total_flow(prep.nonground_t, t, opt.flow), n, prep.map_t,
          pair.cloud_t, t);

      RefineConfig refine_cfg = cfg.refine;
      refine_cfg.delta_t = pair.delta_t;
      refine_cfg.seed = derive_seed(scene_seed, kSeedRefine);
      const RefineResult rr = refine_flow(compensated, opt.flow, refine_cfg);
      const FlowField full_total = scatter_flow(
          compose_total_flow(prep.nonground_t, t, rr.flow), n, prep.map_t,
          pair.cloud_t, t);

      if (truth.available) {
        slot.sums[0].add(backbone_total, truth.labels, truth.classes,
                         &truth.validity);
        slot.sums[1].add(motion_total, truth.labels, truth.classes,
                         &truth.validity);
        slot.sums[2].add(full_total, truth.labels, truth.classes,
                         &truth.validity);
        slot.scored = true;
      }
      slot.ok = true;
    } catch (const std::exception& e) {
      slot.error = e.what();
    }
  });

  AblationReport report;
  report.variant_names = {"backbone", "backbone+motion", "full"};
  MetricsAccumulator totals[kVariants];
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    SceneSummary summary;
    summary.name = dirs[i].filename().string();
    summary.ok = slots[i].ok;
    summary.error = slots[i].error;
    if (slots[i].ok && slots[i].scored) {
      for (int v = 0; v < kVariants; ++v) totals[v].merge(slots[i].sums[v]);
    }
    if (!slots[i].ok) ++report.failed;
    report.scenes.push_back(std::move(summary));
  }
  for (int v = 0; v < kVariants; ++v) {
    report.aggregates.push_back(totals[v].report());
  }
  return report;
}

std::string AblationReport::to_json() const {
  json j;
  j["variants"] = json::array();
  for (std::size_t v = 0; v < variant_names.size(); ++v) {
    j["variants"].push_back({{"name", variant_names[v]},
                             {"metrics", metrics_json(aggregates[v])}});
  }
  j["scenes"] = json::array();
  for (const auto& s : scenes) {
    json row;
    row["name"] = s.name;
    row["ok"] = s.ok;
    if (!s.ok) row["error"] = s.error;
    j["scenes"].push_back(std::move(row));
  }
  j["failed"] = failed;
  return j.dump(2);
}

DiagnosticsReport run_diagnostics(const PipelineConfig& cfg) {
  cfg.validate();
  const auto dirs = io::list_scene_dirs(cfg.input_dir);
  if (dirs.empty()) {
    throw IoError("no scene directories under " + cfg.input_dir);
  }

  DiagnosticsReport report;
  report.dynamic_ratio_histogram.assign(10, 0);
  report.expected_correspondences_value =
      expected_correspondences(cfg.diag_total_points, cfg.diag_sampled_points);

  std::vector<DiagnosticsReport::SceneRow> rows(dirs.size());
  for_each_scene(dirs.size(), cfg.workers, [&](std::size_t i) {
    const ScenePair pair = io::read_scene_pair(dirs[i]);
    if (!pair.gt_flow) {
      throw InvalidArgumentError("diagnostics need gt_flow.bin in " +
                                 dirs[i].string());
    }
    DiagnosticsReport::SceneRow row;
    row.name = dirs[i].filename().string();
    row.points_t = pair.cloud_t.size();
    row.points_t1 = pair.cloud_t1.size();
    row.chamfer_violation = gt_chamfer_violation(pair);
    if (pair.ego_motion) {
      const auto classes = classify_points(pair, *pair.gt_flow,
                                           cfg.dynamic_speed_threshold);
      std::size_t dynamic = 0;
      for (const auto c : classes) {
        if (c == PointClass::DynamicForeground) ++dynamic;
      }
      row.dynamic_ratio =
          classes.empty() ? 0.0
                          : static_cast<double>(dynamic) /
                                static_cast<double>(classes.size());
    }
    rows[i] = std::move(row);
  });

  for (auto& row : rows) {
    const auto bin = std::min<std::size_t>(
        9, static_cast<std::size_t>(row.dynamic_ratio * 10.0));
    report.dynamic_ratio_histogram[bin] += 1;
    report.scenes.push_back(std::move(row));
  }
  return report;
}

std::string DiagnosticsReport::to_json() const {
  json j;
  j["scenes"] = json::array();
  for (const auto& s : scenes) {
    j["scenes"].push_back({{"name", s.name},
                           {"points_t", s.points_t},
                           {"points_t1", s.points_t1},
                           {"gt_chamfer_violation", s.chamfer_violation},
                           {"dynamic_ratio", s.dynamic_ratio}});
  }
  j["expected_correspondences"] = expected_correspondences_value;
  j["dynamic_ratio_histogram"] = dynamic_ratio_histogram;
  return j.dump(2);
}

PipelineReport evaluate_outputs(const PipelineConfig& cfg) {
  cfg.validate();
  const auto dirs = io::list_scene_dirs(cfg.input_dir);
  if (dirs.empty()) {
    throw IoError("no scene directories under " + cfg.input_dir);
  }

  PipelineReport report;
  MetricsAccumulator aggregate;
  for (const auto& dir : dirs) {
    SceneSummary summary;
    summary.name = dir.filename().string();
    try {
      const ScenePair pair = io::read_scene_pair(dir);
      const fs::path flow_path =
          fs::path(cfg.output_dir) / summary.name / "flow.bin";
      const FlowField pred = io::read_flow_bin(flow_path);
      if (pred.size() != pair.cloud_t.size()) {
        throw IoError(flow_path.string() + ": row count does not match scene");
      }
      CropResult crop = crop_to_square(pair.cloud_t, cfg.crop_half_extent);
      SceneTruth truth = scene_truth(pair, cfg, crop.index_map);
      if (!truth.available) {
        throw InvalidArgumentError("no usable ground truth for scoring");
      }
      MetricsAccumulator acc;
      acc.add(pred, truth.labels, truth.classes, &truth.validity);
      summary.metrics = acc.report();
      aggregate.merge(acc);
      summary.ok = true;
    } catch (const std::exception& e) {
      summary.error = e.what();
      ++report.failed;
    }
    report.scenes.push_back(std::move(summary));
  }
  report.aggregate = aggregate.report();
  return report;
}

}  // namespace sceneflow
