#pragma once

#include "sceneflow/types.hpp"

namespace sceneflow {

struct IcpConfig {
  int max_iterations = 50;
  double correspondence_cutoff = 1.0;   // m
  double convergence_threshold = 1e-6;  // on incremental transform size
  double voxel_size = 0.5;              // m

  void validate() const;
};

// Deterministic voxel-grid downsample: one centroid per occupied voxel,
// emitted in lexicographic voxel order.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size);

// Point-to-point ICP from source onto target, identity initial guess.
// Returns T such that T(source) aligns with target. Inputs are expected to
// be cropped and ground-removed.
RigidTransform estimate_ego_motion(const PointCloud& source,
                                   const PointCloud& target,
                                   const IcpConfig& cfg);
RigidTransform estimate_ego_motion(const ScenePair& pair,
                                   const IcpConfig& cfg);

enum class MotionSource { Provided, Icp };

struct MotionCompensation {
  PointCloud cloud;  // cloud_t expressed in the second frame
  RigidTransform transform;
  MotionSource source = MotionSource::Icp;
};

// Uses the pair's odometry when present, otherwise falls back to ICP.
MotionCompensation motion_compensate(const ScenePair& pair,
                                     const IcpConfig& cfg);

}  // namespace sceneflow
