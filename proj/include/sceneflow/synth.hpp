#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sceneflow/types.hpp"

namespace sceneflow {

// Linear ground strip: height runs from height0 at x_min to height1 at
// x_max, constant across y.
struct GroundSegment {
  double x_min = -30.0;
  double x_max = 30.0;
  double height0 = 0.0;
  double height1 = 0.0;
};

struct SynthObject {
  std::string track_id;  // auto-assigned "obj_<k>" when empty
  Vec3 dimensions = Vec3(4.2, 1.9, 1.6);
  Vec3 center = Vec3::Zero();  // frame-t center, z includes ground clearance
  double yaw = 0.0;
  // Rigid motion of the object in frame-t world coordinates; identity for
  // parked objects.
  RigidTransform motion;
  int points = 300;
  // Fraction of the object's rear (local -x) that the sensor no longer
  // sees in the second frame.
  double occlude_back_fraction_t1 = 0.0;
};

enum class ResampleMode {
  Correlated,   // second frame reuses the first frame's surface samples
  Independent,  // second frame is freshly sampled
};

struct SceneSpec {
  std::vector<GroundSegment> ground;
  double ground_y_extent = 30.0;
  int ground_points = 4000;

  int static_structure_count = 0;
  int static_structure_points = 0;  // total across all structures
  Vec3 static_structure_extents = Vec3(3.0, 3.0, 4.0);
  // Structures land on a ring between these radii. The default keeps them
  // clear of the preset object placements so bodies never interpenetrate.
  double structure_ring_min = 18.5;
  double structure_ring_max = 26.0;

  std::vector<SynthObject> objects;

  // E maps frame-t coordinates into frame-t1 coordinates (the inverse of
  // the sensor's own motion).
  RigidTransform ego_motion;
  double delta_t = 0.1;
  double noise_std = 0.01;
  ResampleMode mode = ResampleMode::Correlated;
  double density_scale = 1.0;  // multiplies every point budget
  double box_padding = 0.1;    // added to each track-box dimension
  std::uint64_t seed = 0;

  void validate() const;
};

// Deterministic scene-pair construction with exact ground truth: every
// emitted flow vector is E(M(p)) - p for the point's owner motion M.
ScenePair generate(const SceneSpec& spec);

// Flat ground, a couple of movers, a parked car, some structures.
SceneSpec preset_flat(std::uint64_t seed);
// Road at 0 m with a 0.15 m curb and objects on both levels.
SceneSpec preset_step(std::uint64_t seed);
// Two ground levels 1.2 m apart; breaks any single-plane ground model.
SceneSpec preset_terrace(std::uint64_t seed);
// A fast truck whose rear half disappears in the second frame.
SceneSpec preset_truck_occlusion(std::uint64_t seed);
// Flat scene whose non-ground points are dynamic_ratio dynamic.
SceneSpec preset_ratio_sweep(double dynamic_ratio, std::uint64_t seed);

}  // namespace sceneflow
