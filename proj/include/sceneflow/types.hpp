#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

namespace sceneflow {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Ordered set of 3D sensor returns, coordinates in meters. Immutable by
// convention once constructed; all operations on clouds are pure functions.
struct PointCloud {
  std::vector<Vec3> points;

  PointCloud() = default;
  explicit PointCloud(std::vector<Vec3> pts) : points(std::move(pts)) {}

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  // Throws InvalidArgumentError if any coordinate is NaN/Inf.
  void validate() const;
};

// Element of SE(3). rotation must be orthonormal with determinant +1
// (checked to 1e-9 by validate()).
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  // Frobenius norm of R^T R - I, plus |det(R) - 1|.
  double orthonormality_drift() const;
  void validate(double tol = 1e-9) const;
};

// Per-point 3D displacement vectors aligned with a source PointCloud.
struct FlowField {
  std::vector<Vec3> vectors;

  FlowField() = default;
  explicit FlowField(std::size_t n) : vectors(n, Vec3::Zero()) {}
  explicit FlowField(std::vector<Vec3> v) : vectors(std::move(v)) {}

  std::size_t size() const { return vectors.size(); }
  void validate() const;
};

// Oriented bounding box of a tracked object in one frame.
struct BoxTrack {
  std::string track_id;
  int frame_index = 0;
  Vec3 center = Vec3::Zero();
  Vec3 dimensions = Vec3::Ones();  // full extents, strictly positive
  Mat3 rotation = Mat3::Identity();

  // Rotation about the vertical axis implied by the orientation matrix.
  double yaw() const;

  // Closed-bound containment test in the box frame.
  bool contains(const Vec3& p) const;

  void validate() const;
};

// Two time-adjacent point clouds plus whatever side information the source
// dataset provides. cloud_t is in frame-t sensor coordinates, cloud_t1 in
// frame-(t+delta) coordinates; ego_motion maps the former into the latter.
struct ScenePair {
  PointCloud cloud_t;
  PointCloud cloud_t1;
  double delta_t = 0.1;
  std::optional<RigidTransform> ego_motion;
  std::vector<BoxTrack> tracks_t;
  std::vector<BoxTrack> tracks_t1;
  std::optional<FlowField> gt_flow;  // over cloud_t

  void validate() const;
};

}  // namespace sceneflow
