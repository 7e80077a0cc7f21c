#pragma once

#include <cstdint>
#include <vector>

#include "sceneflow/clustering.hpp"
#include "sceneflow/types.hpp"

namespace sceneflow {

struct RefineConfig {
  int ransac_iterations = 250;
  double inlier_threshold = 0.2;   // m of flow discrepancy
  double dbscan_epsilon = 0.4;     // m; 0.8 works better on sparse sensors
  int dbscan_min_points = 10;
  double static_speed_threshold = 0.5;  // m/s
  double delta_t = 0.1;                 // s
  std::uint64_t seed = 0;

  void validate() const;
};

struct ClusterRigidFit {
  std::int32_t cluster_id = -1;
  RigidTransform transform;
  std::size_t inlier_count = 0;
  bool snapped_to_identity = false;
};

// Least-squares rigid alignment of points onto targets (same count, >= 3,
// not all collinear): centroid subtraction, SVD of the cross-covariance,
// sign fix so det(R) = +1.
RigidTransform kabsch(const std::vector<Vec3>& points,
                      const std::vector<Vec3>& targets);

// Robust rigid fit of a cluster's flow field: repeated 3-point Kabsch
// hypotheses, inlier counting under cfg.inlier_threshold, final refit on
// the best inlier set. Deterministic given cfg.seed.
ClusterRigidFit ransac_rigid(const std::vector<Vec3>& points,
                             const std::vector<Vec3>& flows,
                             const RefineConfig& cfg);

struct RefineResult {
  FlowField flow;
  ClusterSet clusters;
  std::vector<ClusterRigidFit> fits;  // one per cluster, in cluster order
};

// Piecewise-rigid cleanup of a residual flow field: DBSCAN on the cloud,
// per-cluster RANSAC rigid fit, snap-to-identity when the fitted
// translation speed is below the static threshold. Noise points keep their
// raw flow.
RefineResult refine_flow(const PointCloud& cloud, const FlowField& flow,
                         const RefineConfig& cfg);

}  // namespace sceneflow
