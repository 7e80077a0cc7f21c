#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sceneflow/types.hpp"

namespace sceneflow {

enum class PointClass : std::uint8_t {
  DynamicForeground,
  StaticForeground,
  StaticBackground,
  Unlabeled,
};

struct LabelResult {
  FlowField flow;
  std::vector<bool> valid;  // false: excluded from evaluation
};

// Ground-truth flow from box tracks plus odometry: box points follow their
// track's frame-to-frame rigid motion, everything else follows the ego
// motion. Points whose frame-t track has no frame-(t+1) partner are marked
// invalid but keep their position in the field.
LabelResult generate_flow_labels(const ScenePair& pair);

// Foreground iff inside any frame-t box; dynamic iff the ego-compensated
// label speed reaches threshold_speed. Points flagged invalid come back
// Unlabeled.
std::vector<PointClass> classify_points(const ScenePair& pair,
                                        const FlowField& labels,
                                        double threshold_speed,
                                        const std::vector<bool>* validity =
                                            nullptr);

struct ClassMetrics {
  double epe = 0.0;
  double acc_relax = 0.0;
  double acc_strict = 0.0;
  std::size_t count = 0;
};

struct MetricsReport {
  std::optional<ClassMetrics> dynamic_fg;
  std::optional<ClassMetrics> static_fg;
  std::optional<ClassMetrics> static_bg;
  std::optional<double> epe_avg3;  // mean over the classes present
  std::size_t unlabeled_count = 0;

  std::string to_json() const;
};

// Streaming per-class sums so many scenes reduce deterministically:
// accumulate per-point terms, divide once at the end.
class MetricsAccumulator {
 public:
  void add(const FlowField& pred, const FlowField& gt,
           const std::vector<PointClass>& classes,
           const std::vector<bool>* validity = nullptr);
  void merge(const MetricsAccumulator& other);
  MetricsReport report() const;

 private:
  struct Sums {
    double epe_sum = 0.0;
    std::size_t count = 0;
    std::size_t relax_hits = 0;
    std::size_t strict_hits = 0;
  };
  Sums dyn_fg_, stat_fg_, stat_bg_;
  std::size_t unlabeled_ = 0;
};

MetricsReport compute_metrics(const FlowField& pred, const FlowField& gt,
                              const std::vector<PointClass>& classes,
                              const std::vector<bool>* validity = nullptr);

// sampled^2 / total: how many of `sampled` first-frame points can expect
// their true partner to survive when the second frame is an independent
// `sampled`-of-`total` draw.
double expected_correspondences(std::size_t total, std::size_t sampled);

// Symmetric mean nearest-neighbor distance (meters) between the
// ground-truth-warped first cloud and the second cloud. Zero only when
// every warped point lands exactly on a partner, i.e. the one-to-one
// assumption holds.
double gt_chamfer_violation(const ScenePair& pair);

// Subsamples both frames so `total` points remain with the requested
// dynamic fraction. Deterministic given the seed.
ScenePair resample_dynamic_ratio(const ScenePair& pair, double ratio,
                                 std::size_t total, std::uint64_t seed);

}  // namespace sceneflow
