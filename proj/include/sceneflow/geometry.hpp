#pragma once

#include <cstddef>
#include <vector>

#include "sceneflow/types.hpp"

namespace sceneflow {

// Applies T to every point: out_i = R * p_i + t.
PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& t);

struct CropResult {
  PointCloud cloud;
  // index_map[i] is the index in the input cloud of output point i.
  std::vector<std::size_t> index_map;
};

// Keeps points with |x| <= half_extent and |y| <= half_extent (closed
// bounds, z unbounded).
CropResult crop_to_square(const PointCloud& cloud, double half_extent);

// Result applies b first, then a. Re-orthonormalizes the rotation if the
// accumulated drift exceeds 1e-9.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

RigidTransform inverse(const RigidTransform& t);

// Nearest rotation matrix in Frobenius norm (SVD projection onto SO(3)).
Mat3 orthonormalize(const Mat3& m);

// Rotation angle in radians, in [0, pi].
double rotation_angle(const Mat3& r);

Mat3 rotation_about_z(double yaw);

}  // namespace sceneflow
