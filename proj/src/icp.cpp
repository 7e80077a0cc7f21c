#include "sceneflow/icp.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>

#include "sceneflow/errors.hpp"
#include "sceneflow/geometry.hpp"
#include "sceneflow/kd_tree.hpp"
#include "sceneflow/refine.hpp"

namespace sceneflow {

void IcpConfig::validate() const {
  if (max_iterations <= 0 || correspondence_cutoff <= 0 ||
      convergence_threshold <= 0 || voxel_size <= 0) {
    throw InvalidArgumentError("icp config: all values must be positive");
  }
}

PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size) {
  if (voxel_size <= 0) {
    throw InvalidArgumentError("voxel_downsample: voxel size must be > 0");
  }
  struct Cell {
    Vec3 sum = Vec3::Zero();
    std::size_t count = 0;
  };
  // Ordered map so the output sequence is independent of insertion order.
  std::map<std::array<std::int64_t, 3>, Cell> cells;
  for (const auto& p : cloud.points) {
    std::array<std::int64_t, 3> key{
        static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
        static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
        static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
    auto& cell = cells[key];
    cell.sum += p;
    cell.count += 1;
  }
  PointCloud out;
  out.points.reserve(cells.size());
  for (const auto& [key, cell] : cells) {
    out.points.push_back(cell.sum / static_cast<double>(cell.count));
  }
  return out;
}

namespace {

// One resolution level: iterate NN matching + Kabsch until the update stalls
// or the mean inlier residual stops improving.
RigidTransform icp_stage(const PointCloud& source, const PointCloud& target,
                         double voxel_size, double cutoff,
                         const IcpConfig& cfg, RigidTransform t) {
  const PointCloud src = voxel_downsample(source, voxel_size);
  const PointCloud tgt = voxel_downsample(target, voxel_size);
  const KdTree tgt_tree(tgt);

  RigidTransform prev_t = t;
  double prev_residual = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    std::vector<Vec3> moved, matched;
    double residual_sum = 0.0;
    for (const auto& p : src.points) {
      const Vec3 q = t.apply(p);
      const NearestResult nn = tgt_tree.nearest(q);
      if (nn.distance <= cutoff) {
        moved.push_back(q);
        matched.push_back(tgt.points[nn.index]);
        residual_sum += nn.distance;
      }
    }
    if (moved.size() < 3) {
      throw DegenerateGeometryError(
          "icp: fewer than 3 correspondences under the cutoff");
    }
    const double residual = residual_sum / static_cast<double>(moved.size());
    if (residual > prev_residual) {
      t = prev_t;  // the last step made things worse: undo it and stop
      break;
    }
    prev_residual = residual;
    prev_t = t;

    // kabsch throws DegenerateGeometryError if the surviving
    // correspondences are collinear.
    const RigidTransform increment = kabsch(moved, matched);
    t = compose(increment, t);

    const double step = increment.translation.norm() +
                        rotation_angle(increment.rotation);
    if (step < cfg.convergence_threshold) break;
  }
  return t;
}

}  // namespace

RigidTransform estimate_ego_motion(const PointCloud& source,
                                   const PointCloud& target,
                                   const IcpConfig& cfg) {
  cfg.validate();
  if (source.empty() || target.empty()) {
    throw InvalidArgumentError("icp: empty input cloud");
  }

  // Coarse-to-fine with an annealed cutoff. The 4x stage captures offsets
  // beyond the fine cutoff (a few degrees of rotation displaces distant
  // points by meters). The final tightened stage re-runs at full resolution
  // with a reduced cutoff: once the static structure is roughly aligned,
  // slow-moving objects sit near the nominal cutoff and would otherwise
  // drag the estimate through plausible-but-wrong correspondences.
  RigidTransform t;  // identity start: frame gap is short
  t = icp_stage(source, target, 4.0 * cfg.voxel_size,
                4.0 * cfg.correspondence_cutoff, cfg, t);
  t = icp_stage(source, target, cfg.voxel_size, cfg.correspondence_cutoff,
                cfg, t);
  t = icp_stage(source, target, cfg.voxel_size,
                0.4 * cfg.correspondence_cutoff, cfg, t);
  return t;
}

RigidTransform estimate_ego_motion(const ScenePair& pair,
                                   const IcpConfig& cfg) {
  return estimate_ego_motion(pair.cloud_t, pair.cloud_t1, cfg);
}

MotionCompensation motion_compensate(const ScenePair& pair,
                                     const IcpConfig& cfg) {
  MotionCompensation out;
  if (pair.ego_motion) {
    out.transform = *pair.ego_motion;
    out.source = MotionSource::Provided;
  } else {
    out.transform = estimate_ego_motion(pair.cloud_t, pair.cloud_t1, cfg);
    out.source = MotionSource::Icp;
  }
  out.cloud = apply_transform(pair.cloud_t, out.transform);
  return out;
}

}  // namespace sceneflow
