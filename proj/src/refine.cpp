#include "sceneflow/refine.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <array>
#include <cmath>

#include "sceneflow/errors.hpp"
#include "sceneflow/rng.hpp"

namespace sceneflow {

namespace {

// Collinear or coincident source points leave the rotation underdetermined
// about the line axis. Detected via the middle singular value of the
// centered point matrix.
bool is_degenerate(const std::vector<Vec3>& points) {
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  Eigen::MatrixXd centered(3, static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    centered.col(static_cast<Eigen::Index>(i)) = points[i] - centroid;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  const auto& s = svd.singularValues();
  return s(1) <= 1e-9 * std::max(1.0, s(0));
}

std::size_t count_inliers(const std::vector<Vec3>& points,
                          const std::vector<Vec3>& flows,
                          const RigidTransform& t, double threshold) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 rigid_flow = t.apply(points[i]) - points[i];
    if ((rigid_flow - flows[i]).norm() < threshold) ++count;
  }
  return count;
}

std::vector<std::size_t> collect_inliers(const std::vector<Vec3>& points,
                                         const std::vector<Vec3>& flows,
                                         const RigidTransform& t,
                                         double threshold) {
  std::vector<std::size_t> inliers;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 rigid_flow = t.apply(points[i]) - points[i];
    if ((rigid_flow - flows[i]).norm() < threshold) inliers.push_back(i);
  }
  return inliers;
}

}  // namespace

void RefineConfig::validate() const {
  if (ransac_iterations <= 0 || inlier_threshold <= 0 || dbscan_epsilon <= 0 ||
      dbscan_min_points <= 0 || static_speed_threshold <= 0 || delta_t <= 0) {
    throw InvalidArgumentError("refine config: all values must be positive");
  }
}

RigidTransform kabsch(const std::vector<Vec3>& points,
                      const std::vector<Vec3>& targets) {
  if (points.size() != targets.size()) {
    throw InvalidArgumentError("kabsch: point/target count mismatch");
  }
  if (points.size() < 3) {
    throw InvalidArgumentError("kabsch: need at least 3 correspondences");
  }
  if (is_degenerate(points)) {
    throw DegenerateGeometryError(
        "kabsch: source points are collinear or coincident");
  }

  Vec3 p_bar = Vec3::Zero(), q_bar = Vec3::Zero();
  for (std::size_t i = 0; i < points.size(); ++i) {
    p_bar += points[i];
    q_bar += targets[i];
  }
  p_bar /= static_cast<double>(points.size());
  q_bar /= static_cast<double>(points.size());

  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < points.size(); ++i) {
    h += (points[i] - p_bar) * (targets[i] - q_bar).transpose();
  }

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0;

  RigidTransform out;
  out.rotation = v * d * u.transpose();
  out.translation = q_bar - out.rotation * p_bar;
  return out;
}

ClusterRigidFit ransac_rigid(const std::vector<Vec3>& points,
                             const std::vector<Vec3>& flows,
                             const RefineConfig& cfg) {
  cfg.validate();
  if (points.size() != flows.size()) {
    throw InvalidArgumentError("ransac_rigid: point/flow count mismatch");
  }
  if (points.size() < 3) {
    throw InvalidArgumentError("ransac_rigid: cluster smaller than 3 points");
  }

  std::vector<Vec3> targets(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    targets[i] = points[i] + flows[i];
  }

  ClusterRigidFit fit;

  if (points.size() == 3) {
    fit.transform = kabsch(points, targets);  // single exact fit
    fit.inlier_count =
        count_inliers(points, flows, fit.transform, cfg.inlier_threshold);
    return fit;
  }

  Rng rng(cfg.seed);
  const long max_attempts = 10L * cfg.ransac_iterations;
  long attempts = 0;
  bool have_best = false;
  RigidTransform best;
  std::size_t best_inliers = 0;

  for (int iter = 0; iter < cfg.ransac_iterations; ++iter) {
    std::array<std::size_t, 3> idx{};
    std::vector<Vec3> sample_p(3), sample_q(3);
    bool ok = false;
    while (!ok) {
      if (++attempts > max_attempts) {
        throw DegenerateGeometryError(
            "ransac_rigid: no non-degenerate 3-point sample found");
      }
      idx[0] = rng.index(points.size());
      do { idx[1] = rng.index(points.size()); } while (idx[1] == idx[0]);
      do {
        idx[2] = rng.index(points.size());
      } while (idx[2] == idx[0] || idx[2] == idx[1]);
      for (int k = 0; k < 3; ++k) {
        sample_p[k] = points[idx[k]];
        sample_q[k] = targets[idx[k]];
      }
      ok = !is_degenerate(sample_p);
    }

    const RigidTransform candidate = kabsch(sample_p, sample_q);
    const std::size_t inliers =
        count_inliers(points, flows, candidate, cfg.inlier_threshold);
    if (!have_best || inliers > best_inliers) {  // ties keep the first best
      have_best = true;
      best = candidate;
      best_inliers = inliers;
    }
  }

  fit.transform = best;
  fit.inlier_count = best_inliers;

  // Final polish: recompute the transform from every inlier of the winning
  // hypothesis, provided the inlier set itself supports a unique fit.
  const auto inliers =
      collect_inliers(points, flows, best, cfg.inlier_threshold);
  if (inliers.size() >= 3) {
    std::vector<Vec3> in_p, in_q;
    in_p.reserve(inliers.size());
    in_q.reserve(inliers.size());
    for (std::size_t i : inliers) {
      in_p.push_back(points[i]);
      in_q.push_back(targets[i]);
    }
    if (!is_degenerate(in_p)) {
      fit.transform = kabsch(in_p, in_q);
      fit.inlier_count =
          count_inliers(points, flows, fit.transform, cfg.inlier_threshold);
    }
  }
  return fit;
}

RefineResult refine_flow(const PointCloud& cloud, const FlowField& flow,
                         const RefineConfig& cfg) {
  cfg.validate();
  if (cloud.size() != flow.size()) {
    throw InvalidArgumentError("refine_flow: cloud/flow size mismatch");
  }

  RefineResult out;
  out.flow = flow;  // noise points keep their raw prediction
  if (cloud.empty()) return out;

  out.clusters = dbscan(cloud, cfg.dbscan_epsilon, cfg.dbscan_min_points);

  for (std::int32_t c = 0; c < out.clusters.cluster_count; ++c) {
    const auto members = out.clusters.members(c);
    std::vector<Vec3> pts, fls;
    pts.reserve(members.size());
    fls.reserve(members.size());
    for (std::size_t i : members) {
      pts.push_back(cloud.points[i]);
      fls.push_back(flow.vectors[i]);
    }

    RefineConfig cluster_cfg = cfg;
    cluster_cfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(c));
    ClusterRigidFit fit = ransac_rigid(pts, fls, cluster_cfg);
    fit.cluster_id = c;

    const double speed = fit.transform.translation.norm() / cfg.delta_t;
    if (speed < cfg.static_speed_threshold) {
      fit.transform = RigidTransform::identity();
      fit.snapped_to_identity = true;
    }

    for (std::size_t i : members) {
      out.flow.vectors[i] =
          fit.transform.apply(cloud.points[i]) - cloud.points[i];
    }
    out.fits.push_back(std::move(fit));
  }
  return out;
}

}  // namespace sceneflow
