#include "sceneflow/eval.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "sceneflow/errors.hpp"
#include "sceneflow/geometry.hpp"
#include "sceneflow/kd_tree.hpp"
#include "sceneflow/rng.hpp"

namespace sceneflow {

using nlohmann::json;

namespace {

// Rigid motion taking frame-t box coordinates to the frame-(t+1) pose:
// R = R1 R0^T, t = c1 - R c0.
RigidTransform track_motion(const BoxTrack& a, const BoxTrack& b) {
  RigidTransform m;
  m.rotation = b.rotation * a.rotation.transpose();
  m.translation = b.center - m.rotation * a.center;
  return m;
}

const BoxTrack* find_track(const std::vector<BoxTrack>& tracks,
                           const std::string& id) {
  for (const auto& t : tracks) {
    if (t.track_id == id) return &t;
  }
  return nullptr;
}

}  // namespace

LabelResult generate_flow_labels(const ScenePair& pair) {
  if (!pair.ego_motion) {
    throw InvalidArgumentError("generate_flow_labels: ego motion required");
  }
  for (const auto& t : pair.tracks_t) t.validate();
  for (const auto& t : pair.tracks_t1) t.validate();

  const RigidTransform& ego = *pair.ego_motion;

  LabelResult out;
  out.flow.vectors.resize(pair.cloud_t.size());
  out.valid.assign(pair.cloud_t.size(), true);

  // Per-track motion resolved once; unmatched tracks mark their points
  // invalid instead of guessing a motion.
  std::vector<const RigidTransform*> motions(pair.tracks_t.size(), nullptr);
  std::vector<RigidTransform> storage(pair.tracks_t.size());
  for (std::size_t k = 0; k < pair.tracks_t.size(); ++k) {
    const BoxTrack* partner =
        find_track(pair.tracks_t1, pair.tracks_t[k].track_id);
    if (partner) {
      storage[k] = track_motion(pair.tracks_t[k], *partner);
      motions[k] = &storage[k];
    }
  }

  for (std::size_t i = 0; i < pair.cloud_t.size(); ++i) {
    const Vec3& p = pair.cloud_t.points[i];
    bool boxed = false;
    for (std::size_t k = 0; k < pair.tracks_t.size(); ++k) {
      if (!pair.tracks_t[k].contains(p)) continue;
      boxed = true;
      if (motions[k]) {
        out.flow.vectors[i] = motions[k]->apply(p) - p;
      } else {
        out.flow.vectors[i] = Vec3::Zero();
        out.valid[i] = false;
      }
      break;
    }
    if (!boxed) out.flow.vectors[i] = ego.apply(p) - p;
  }
  return out;
}

std::vector<PointClass> classify_points(const ScenePair& pair,
                                        const FlowField& labels,
                                        double threshold_speed,
                                        const std::vector<bool>* validity) {
  if (labels.size() != pair.cloud_t.size()) {
    throw InvalidArgumentError("classify_points: label/cloud size mismatch");
  }
  if (validity && validity->size() != labels.size()) {
    throw InvalidArgumentError("classify_points: validity size mismatch");
  }
  if (!pair.ego_motion) {
    throw InvalidArgumentError("classify_points: ego motion required");
  }
  if (pair.delta_t <= 0) {
    throw InvalidArgumentError("classify_points: delta_t must be > 0");
  }

  const RigidTransform& ego = *pair.ego_motion;
  std::vector<PointClass> classes(pair.cloud_t.size());
  for (std::size_t i = 0; i < pair.cloud_t.size(); ++i) {
    if (validity && !(*validity)[i]) {
      classes[i] = PointClass::Unlabeled;
      continue;
    }
    const Vec3& p = pair.cloud_t.points[i];
    bool foreground = false;
    for (const auto& box : pair.tracks_t) {
      if (box.contains(p)) {
        foreground = true;
        break;
      }
    }
    if (!foreground) {
      classes[i] = PointClass::StaticBackground;
      continue;
    }
    const Vec3 ego_flow = ego.apply(p) - p;
    const double speed = (labels.vectors[i] - ego_flow).norm() / pair.delta_t;
    classes[i] = speed >= threshold_speed ? PointClass::DynamicForeground
                                          : PointClass::StaticForeground;
  }
  return classes;
}

void MetricsAccumulator::add(const FlowField& pred, const FlowField& gt,
                             const std::vector<PointClass>& classes,
                             const std::vector<bool>* validity) {
  if (pred.size() != gt.size() || pred.size() != classes.size()) {
    throw InvalidArgumentError("metrics: input length mismatch");
  }
  if (validity && validity->size() != pred.size()) {
    throw InvalidArgumentError("metrics: validity length mismatch");
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if ((validity && !(*validity)[i]) ||
        classes[i] == PointClass::Unlabeled) {
      ++unlabeled_;
      continue;
    }
    Sums* sums = nullptr;
    switch (classes[i]) {
      case PointClass::DynamicForeground: sums = &dyn_fg_; break;
      case PointClass::StaticForeground: sums = &stat_fg_; break;
      case PointClass::StaticBackground: sums = &stat_bg_; break;
      case PointClass::Unlabeled: break;
    }
    const double epe = (pred.vectors[i] - gt.vectors[i]).norm();
    const double gt_norm = gt.vectors[i].norm();
    sums->epe_sum += epe;
    sums->count += 1;
    // Relative branch only applies when the ground truth is nonzero.
    if (epe < 0.1 || (gt_norm > 0 && epe / gt_norm < 0.1)) ++sums->relax_hits;
    if (epe < 0.05 || (gt_norm > 0 && epe / gt_norm < 0.05)) {
      ++sums->strict_hits;
    }
  }
}

void MetricsAccumulator::merge(const MetricsAccumulator& other) {
  auto merge_sums = [](Sums& mine, const Sums& theirs) {
    mine.epe_sum += theirs.epe_sum;
    mine.count += theirs.count;
    mine.relax_hits += theirs.relax_hits;
    mine.strict_hits += theirs.strict_hits;
  };
  merge_sums(dyn_fg_, other.dyn_fg_);
  merge_sums(stat_fg_, other.stat_fg_);
  merge_sums(stat_bg_, other.stat_bg_);
  unlabeled_ += other.unlabeled_;
}

MetricsReport MetricsAccumulator::report() const {
  MetricsReport out;
  out.unlabeled_count = unlabeled_;
  auto finish = [](const Sums& s) -> std::optional<ClassMetrics> {
    if (s.count == 0) return std::nullopt;
    ClassMetrics m;
    m.count = s.count;
    m.epe = s.epe_sum / static_cast<double>(s.count);
    m.acc_relax = static_cast<double>(s.relax_hits) /
                  static_cast<double>(s.count);
    m.acc_strict = static_cast<double>(s.strict_hits) /
                   static_cast<double>(s.count);
    return m;
  };
  out.dynamic_fg = finish(dyn_fg_);
  out.static_fg = finish(stat_fg_);
  out.static_bg = finish(stat_bg_);

  double epe_total = 0.0;
  int present = 0;
  for (const auto& m : {out.dynamic_fg, out.static_fg, out.static_bg}) {
    if (m) {
      epe_total += m->epe;
      ++present;
    }
  }
  if (present > 0) out.epe_avg3 = epe_total / present;
  return out;
}

MetricsReport compute_metrics(const FlowField& pred, const FlowField& gt,
                              const std::vector<PointClass>& classes,
                              const std::vector<bool>* validity) {
  MetricsAccumulator acc;
  acc.add(pred, gt, classes, validity);
  return acc.report();
}

std::string MetricsReport::to_json() const {
  auto class_json = [](const std::optional<ClassMetrics>& m) {
    return m ? json(m->epe) : json(nullptr);
  };
  json j;
  j["epe"]["avg3"] = epe_avg3 ? json(*epe_avg3) : json(nullptr);
  j["epe"]["dyn_fg"] = class_json(dynamic_fg);
  j["epe"]["stat_fg"] = class_json(static_fg);
  j["epe"]["stat_bg"] = class_json(static_bg);
  j["accr_dyn_fg"] = dynamic_fg ? json(dynamic_fg->acc_relax) : json(nullptr);
  j["accs_dyn_fg"] = dynamic_fg ? json(dynamic_fg->acc_strict) : json(nullptr);
  j["counts"] = {
      {"dyn_fg", dynamic_fg ? dynamic_fg->count : 0},
      {"stat_fg", static_fg ? static_fg->count : 0},
      {"stat_bg", static_bg ? static_bg->count : 0},
      {"unlabeled", unlabeled_count},
  };
  return j.dump();
}

double expected_correspondences(std::size_t total, std::size_t sampled) {
  if (total == 0) {
    throw InvalidArgumentError("expected_correspondences: total must be > 0");
  }
  if (sampled > total) {
    throw InvalidArgumentError(
        "expected_correspondences: sampled exceeds total");
  }
  return static_cast<double>(sampled) * static_cast<double>(sampled) /
         static_cast<double>(total);
}

double gt_chamfer_violation(const ScenePair& pair) {
  if (!pair.gt_flow) {
    throw InvalidArgumentError("gt_chamfer_violation: ground truth required");
  }
  if (pair.gt_flow->size() != pair.cloud_t.size()) {
    throw InvalidArgumentError("gt_chamfer_violation: flow size mismatch");
  }
  if (pair.cloud_t.empty() || pair.cloud_t1.empty()) {
    throw InvalidArgumentError("gt_chamfer_violation: empty cloud");
  }

  PointCloud warped;
  warped.points.resize(pair.cloud_t.size());
  for (std::size_t i = 0; i < pair.cloud_t.size(); ++i) {
    warped.points[i] = pair.cloud_t.points[i] + pair.gt_flow->vectors[i];
  }

  const KdTree warped_tree(warped);
  const KdTree target_tree(pair.cloud_t1);
  double sum_fwd = 0.0;
  for (const auto& p : warped.points) {
    sum_fwd += target_tree.nearest(p).distance;
  }
  double sum_bwd = 0.0;
  for (const auto& q : pair.cloud_t1.points) {
    sum_bwd += warped_tree.nearest(q).distance;
  }
  return 0.5 * (sum_fwd / static_cast<double>(warped.size()) +
                sum_bwd / static_cast<double>(pair.cloud_t1.size()));
}

namespace {

// Draw k of n indices without replacement (partial Fisher-Yates), then
// restore ascending order so the output cloud keeps the input ordering.
std::vector<std::size_t> sample_without_replacement(
    const std::vector<std::size_t>& pool, std::size_t k, Rng& rng) {
  std::vector<std::size_t> indices = pool;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.index(indices.size() - i);
    std::swap(indices[i], indices[j]);
  }
  indices.resize(k);
  std::sort(indices.begin(), indices.end());
  return indices;
}

// Dynamic test for second-frame points, where no per-point labels exist:
// a point is treated as dynamic if it sits in a frame-t1 box whose track
// moved (ego-compensated) at least 0.5 m/s, or in a box with no frame-t
// partner (unknown motion is excluded from the static pool).
bool t1_point_dynamic(const Vec3& p, const ScenePair& pair,
                      double threshold_speed) {
  for (const auto& box : pair.tracks_t1) {
    if (!box.contains(p)) continue;
    const BoxTrack* partner = find_track(pair.tracks_t, box.track_id);
    if (!partner) return true;
    const Vec3 ego_center = pair.ego_motion->apply(partner->center);
    const double speed = (box.center - ego_center).norm() / pair.delta_t;
    return speed >= threshold_speed;
  }
  return false;
}

}  // namespace

ScenePair resample_dynamic_ratio(const ScenePair& pair, double ratio,
                                 std::size_t total, std::uint64_t seed) {
  if (ratio < 0.0 || ratio > 1.0) {
    throw InvalidArgumentError("resample_dynamic_ratio: ratio outside [0,1]");
  }
  if (total == 0) {
    throw InvalidArgumentError("resample_dynamic_ratio: total must be > 0");
  }
  if (!pair.gt_flow) {
    throw InvalidArgumentError(
        "resample_dynamic_ratio: ground-truth flow required to classify");
  }
  if (!pair.ego_motion) {
    throw InvalidArgumentError("resample_dynamic_ratio: ego motion required");
  }

  const double threshold_speed = 0.5;
  const auto classes = classify_points(pair, *pair.gt_flow, threshold_speed);

  std::vector<std::size_t> dynamic_t, static_t;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == PointClass::DynamicForeground) {
      dynamic_t.push_back(i);
    } else {
      static_t.push_back(i);
    }
  }

  const std::size_t want_dynamic =
      static_cast<std::size_t>(std::llround(ratio * double(total)));
  const std::size_t want_static = total - want_dynamic;
  if (want_dynamic > dynamic_t.size() || want_static > static_t.size()) {
    throw InvalidArgumentError(
        "resample_dynamic_ratio: not enough points of the requested kinds");
  }

  std::vector<std::size_t> dynamic_t1, static_t1;
  for (std::size_t i = 0; i < pair.cloud_t1.size(); ++i) {
    if (t1_point_dynamic(pair.cloud_t1.points[i], pair, threshold_speed)) {
      dynamic_t1.push_back(i);
    } else {
      static_t1.push_back(i);
    }
  }
  if (want_dynamic > dynamic_t1.size() || want_static > static_t1.size()) {
    throw InvalidArgumentError(
        "resample_dynamic_ratio: second frame lacks the requested points");
  }

  Rng rng(seed);
  auto keep_dyn_t = sample_without_replacement(dynamic_t, want_dynamic, rng);
  auto keep_stat_t = sample_without_replacement(static_t, want_static, rng);
  auto keep_dyn_t1 = sample_without_replacement(dynamic_t1, want_dynamic, rng);
  auto keep_stat_t1 = sample_without_replacement(static_t1, want_static, rng);

  std::vector<std::size_t> keep_t(keep_dyn_t);
  keep_t.insert(keep_t.end(), keep_stat_t.begin(), keep_stat_t.end());
  std::sort(keep_t.begin(), keep_t.end());
  std::vector<std::size_t> keep_t1(keep_dyn_t1);
  keep_t1.insert(keep_t1.end(), keep_stat_t1.begin(), keep_stat_t1.end());
  std::sort(keep_t1.begin(), keep_t1.end());

  ScenePair out;
  out.delta_t = pair.delta_t;
  out.ego_motion = pair.ego_motion;
  out.tracks_t = pair.tracks_t;
  out.tracks_t1 = pair.tracks_t1;
  out.gt_flow = FlowField();
  for (std::size_t i : keep_t) {
    out.cloud_t.points.push_back(pair.cloud_t.points[i]);
    out.gt_flow->vectors.push_back(pair.gt_flow->vectors[i]);
  }
  for (std::size_t i : keep_t1) {
    out.cloud_t1.points.push_back(pair.cloud_t1.points[i]);
  }
  return out;
}

}  // namespace sceneflow
