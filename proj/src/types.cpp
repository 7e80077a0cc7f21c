#include "sceneflow/types.hpp"

#include <Eigen/LU>
#include <cmath>

#include "sceneflow/errors.hpp"

namespace sceneflow {

void PointCloud::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite()) {
      throw InvalidArgumentError("PointCloud: non-finite coordinate at index " +
                                 std::to_string(i));
    }
  }
}

double RigidTransform::orthonormality_drift() const {
  const Mat3 gram = rotation.transpose() * rotation;
  const double ortho = (gram - Mat3::Identity()).norm();
  const double det = std::abs(rotation.determinant() - 1.0);
  return ortho + det;
}

void RigidTransform::validate(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw InvalidArgumentError("RigidTransform: non-finite entries");
  }
  if (orthonormality_drift() > tol) {
    throw InvalidArgumentError(
        "RigidTransform: rotation not orthonormal with det +1 (drift " +
        std::to_string(orthonormality_drift()) + ")");
  }
}

void FlowField::validate() const {
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (!vectors[i].allFinite()) {
      throw InvalidArgumentError("FlowField: non-finite component at index " +
                                 std::to_string(i));
    }
  }
}

double BoxTrack::yaw() const {
  return std::atan2(rotation(1, 0), rotation(0, 0));
}

bool BoxTrack::contains(const Vec3& p) const {
  const Vec3 local = rotation.transpose() * (p - center);
  return std::abs(local.x()) <= 0.5 * dimensions.x() &&
         std::abs(local.y()) <= 0.5 * dimensions.y() &&
         std::abs(local.z()) <= 0.5 * dimensions.z();
}

void BoxTrack::validate() const {
  if (!(dimensions.array() > 0.0).all()) {
    throw InvalidArgumentError("BoxTrack '" + track_id +
                               "': dimensions must be strictly positive");
  }
  RigidTransform pose;
  pose.rotation = rotation;
  pose.translation = center;
  if (!pose.rotation.allFinite() || pose.orthonormality_drift() > 1e-6) {
    throw InvalidArgumentError("BoxTrack '" + track_id +
                               "': orientation is not a rotation matrix");
  }
}

void ScenePair::validate() const {
  cloud_t.validate();
  cloud_t1.validate();
  if (delta_t <= 0.0) {
    throw InvalidArgumentError("ScenePair: delta_t must be > 0");
  }
  if (ego_motion) ego_motion->validate();
  if (gt_flow) {
    gt_flow->validate();
    if (gt_flow->size() != cloud_t.size()) {
      throw InvalidArgumentError(
          "ScenePair: gt_flow length does not match cloud_t");
    }
  }
  for (const auto& b : tracks_t) b.validate();
  for (const auto& b : tracks_t1) b.validate();
}

}  // namespace sceneflow
