#include "sceneflow/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sceneflow/errors.hpp"
#include "sceneflow/geometry.hpp"
#include "sceneflow/rng.hpp"

namespace sceneflow {

namespace {

// Largest-remainder split of `total` into shares proportional to weights.
// Exact (sums to total) and deterministic (remainder ties to lowest index).
std::vector<int> allocate(int total, const std::vector<double>& weights) {
  const double weight_sum =
      std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<int> shares(weights.size(), 0);
  if (total <= 0 || weight_sum <= 0) return shares;

  std::vector<double> remainders(weights.size());
  int used = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = total * weights[i] / weight_sum;
    shares[i] = static_cast<int>(std::floor(exact));
    remainders[i] = exact - shares[i];
    used += shares[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainders[a] > remainders[b];
  });
  for (int k = 0; k < total - used; ++k) shares[order[k % order.size()]] += 1;
  return shares;
}

int scaled(int points, double density_scale) {
  if (points <= 0) return 0;
  return std::max(1, static_cast<int>(std::llround(points * density_scale)));
}

double segment_height(const GroundSegment& seg, double x) {
  const double t = (x - seg.x_min) / (seg.x_max - seg.x_min);
  return seg.height0 + t * (seg.height1 - seg.height0);
}

// One surface sample on a jittered grid cell of a ground segment.
void sample_ground(const GroundSegment& seg, double y_extent, int count,
                   double noise_std, Rng& rng, std::vector<Vec3>& out) {
  if (count <= 0) return;
  const double len_x = seg.x_max - seg.x_min;
  const double len_y = 2.0 * y_extent;
  // Grid proportions follow the strip's aspect ratio.
  int nx = std::max(1, static_cast<int>(std::llround(
                           std::sqrt(count * len_x / len_y))));
  int ny = (count + nx - 1) / nx;
  const double dx = len_x / nx, dy = len_y / ny;
  int emitted = 0;
  for (int iy = 0; iy < ny && emitted < count; ++iy) {
    for (int ix = 0; ix < nx && emitted < count; ++ix) {
      const double x = seg.x_min + (ix + rng.uniform()) * dx;
      const double y = -y_extent + (iy + rng.uniform()) * dy;
      const double z = segment_height(seg, x) + noise_std * rng.normal();
      out.emplace_back(x, y, z);
      ++emitted;
    }
  }
}

struct Face {
  Vec3 normal;   // local
  Vec3 center;   // local
  Vec3 u_axis;   // local in-plane axes
  Vec3 v_axis;
  double half_u;
  double half_v;
  double area;
};

std::vector<Face> box_faces(const Vec3& dims) {
  const double hx = dims.x() / 2, hy = dims.y() / 2, hz = dims.z() / 2;
  return {
      {Vec3(1, 0, 0), Vec3(hx, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), hy, hz,
       dims.y() * dims.z()},
      {Vec3(-1, 0, 0), Vec3(-hx, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), hy, hz,
       dims.y() * dims.z()},
      {Vec3(0, 1, 0), Vec3(0, hy, 0), Vec3(1, 0, 0), Vec3(0, 0, 1), hx, hz,
       dims.x() * dims.z()},
      {Vec3(0, -1, 0), Vec3(0, -hy, 0), Vec3(1, 0, 0), Vec3(0, 0, 1), hx, hz,
       dims.x() * dims.z()},
      {Vec3(0, 0, 1), Vec3(0, 0, hz), Vec3(1, 0, 0), Vec3(0, 1, 0), hx, hy,
       dims.x() * dims.y()},
      {Vec3(0, 0, -1), Vec3(0, 0, -hz), Vec3(1, 0, 0), Vec3(0, 1, 0), hx, hy,
       dims.x() * dims.y()},
  };
}

// Samples the faces of an oriented box that face the sensor at the origin.
// Returns local-frame sample coordinates so callers decide the pose.
std::vector<Vec3> sample_box_local(const Vec3& dims, const Mat3& rotation,
                                   const Vec3& center, int count, Rng& rng) {
  std::vector<Face> faces = box_faces(dims);
  std::vector<Face> visible;
  for (const auto& f : faces) {
    const Vec3 world_normal = rotation * f.normal;
    const Vec3 world_center = center + rotation * f.center;
    if (world_normal.dot(world_center) < 0) visible.push_back(f);
  }
  if (visible.empty()) visible = faces;  // sensor inside: sample everything

  std::vector<double> areas;
  for (const auto& f : visible) areas.push_back(f.area);
  const std::vector<int> shares = allocate(count, areas);

  std::vector<Vec3> samples;
  samples.reserve(static_cast<std::size_t>(count));
  for (std::size_t fi = 0; fi < visible.size(); ++fi) {
    const Face& f = visible[fi];
    for (int k = 0; k < shares[fi]; ++k) {
      const double u = rng.uniform(-f.half_u, f.half_u);
      const double v = rng.uniform(-f.half_v, f.half_v);
      samples.push_back(f.center + u * f.u_axis + v * f.v_axis);
    }
  }
  return samples;
}

struct Body {
  Vec3 dimensions;
  Vec3 center;
  Mat3 rotation;
  RigidTransform motion;  // identity for ground-fixed structures
  int points = 0;
  double occlude_back_fraction_t1 = 0.0;
  bool tracked = false;
  std::string track_id;
};

}  // namespace

void SceneSpec::validate() const {
  for (const auto& seg : ground) {
    if (seg.x_max <= seg.x_min) {
      throw InvalidArgumentError("scene spec: ground segment has x_max <= x_min");
    }
  }
  if (ground_y_extent <= 0 || delta_t <= 0 || density_scale <= 0) {
    throw InvalidArgumentError("scene spec: non-positive extent/steps");
  }
  if (structure_ring_min <= 0 || structure_ring_max <= structure_ring_min) {
    throw InvalidArgumentError("scene spec: bad structure ring radii");
  }
  if (ground_points < 0 || static_structure_count < 0 ||
      static_structure_points < 0) {
    throw InvalidArgumentError("scene spec: negative point budget");
  }
  if (noise_std < 0 || box_padding < 0) {
    throw InvalidArgumentError("scene spec: negative noise or padding");
  }
  for (const auto& obj : objects) {
    if ((obj.dimensions.array() <= 0).any()) {
      throw InvalidArgumentError("scene spec: object with non-positive size");
    }
    if (obj.points < 0) {
      throw InvalidArgumentError("scene spec: object with negative points");
    }
    if (obj.occlude_back_fraction_t1 < 0 || obj.occlude_back_fraction_t1 > 1) {
      throw InvalidArgumentError("scene spec: occlusion fraction outside [0,1]");
    }
    obj.motion.validate();
  }
  ego_motion.validate();
}

ScenePair generate(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const RigidTransform& ego = spec.ego_motion;

  // --- frame-t sampling -------------------------------------------------
  // Ground first, then structures, then objects, so identical specs give
  // identical clouds point-for-point.
  std::vector<Vec3> ground_pts;
  {
    std::vector<double> lengths;
    for (const auto& seg : spec.ground) lengths.push_back(seg.x_max - seg.x_min);
    const auto shares =
        allocate(scaled(spec.ground_points, spec.density_scale), lengths);
    for (std::size_t i = 0; i < spec.ground.size(); ++i) {
      sample_ground(spec.ground[i], spec.ground_y_extent, shares[i],
                    spec.noise_std, rng, ground_pts);
    }
  }

  std::vector<Body> bodies;

  // Structures sit on the ground at deterministic ring positions.
  if (spec.static_structure_count > 0 && spec.static_structure_points > 0) {
    const auto shares = allocate(
        scaled(spec.static_structure_points, spec.density_scale),
        std::vector<double>(spec.static_structure_count, 1.0));
    for (int s = 0; s < spec.static_structure_count; ++s) {
      const double angle =
          2.0 * M_PI * s / spec.static_structure_count + rng.uniform(-0.2, 0.2);
      const double radius =
          rng.uniform(spec.structure_ring_min, spec.structure_ring_max);
      Body b;
      b.dimensions = spec.static_structure_extents;
      const double x = radius * std::cos(angle);
      const double y = radius * std::sin(angle);
      double ground_z = 0.0;
      for (const auto& seg : spec.ground) {
        if (x >= seg.x_min && x <= seg.x_max) {
          ground_z = segment_height(seg, x);
          break;
        }
      }
      b.center = Vec3(x, y, ground_z + b.dimensions.z() / 2);
      b.rotation = rotation_about_z(rng.uniform(0, 2.0 * M_PI));
      b.points = shares[static_cast<std::size_t>(s)];
      bodies.push_back(b);
    }
  }

  for (std::size_t k = 0; k < spec.objects.size(); ++k) {
    const SynthObject& obj = spec.objects[k];
    if (obj.points == 0) continue;
    Body b;
    b.dimensions = obj.dimensions;
    b.center = obj.center;
    b.rotation = rotation_about_z(obj.yaw);
    b.motion = obj.motion;
    b.points = scaled(obj.points, spec.density_scale);
    b.occlude_back_fraction_t1 = obj.occlude_back_fraction_t1;
    b.tracked = true;
    b.track_id =
        obj.track_id.empty() ? "obj_" + std::to_string(k) : obj.track_id;
    bodies.push_back(b);
  }

  struct Sample {
    Vec3 p;             // frame-t position (noise included)
    const Body* body;   // null for ground
    double local_x = 0; // along the body for occlusion decisions
  };
  std::vector<Sample> samples;
  samples.reserve(ground_pts.size());
  for (const auto& g : ground_pts) samples.push_back({g, nullptr, 0.0});
  for (const auto& b : bodies) {
    const auto local = sample_box_local(b.dimensions, b.rotation, b.center,
                                        b.points, rng);
    for (const auto& l : local) {
      Vec3 p = b.center + b.rotation * l;
      p += Vec3(spec.noise_std * rng.normal(), spec.noise_std * rng.normal(),
                spec.noise_std * rng.normal());
      samples.push_back({p, &b, l.x()});
    }
  }

  // --- pair assembly ----------------------------------------------------
  ScenePair pair;
  pair.delta_t = spec.delta_t;
  pair.ego_motion = ego;
  pair.gt_flow = FlowField();
  pair.cloud_t.points.reserve(samples.size());
  pair.gt_flow->vectors.reserve(samples.size());

  auto moved = [&](const Sample& s) {
    // The exact double-precision motion of this sample into frame t+1.
    const Vec3 world = s.body ? s.body->motion.apply(s.p) : s.p;
    return ego.apply(world);
  };

  for (const auto& s : samples) {
    pair.cloud_t.points.push_back(s.p);
    pair.gt_flow->vectors.push_back(moved(s) - s.p);
  }

  if (spec.mode == ResampleMode::Correlated) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Sample& s = samples[i];
      if (s.body && s.body->occlude_back_fraction_t1 > 0) {
        const double cut = -s.body->dimensions.x() / 2 +
                           s.body->occlude_back_fraction_t1 *
                               s.body->dimensions.x();
        if (s.local_x < cut) continue;
      }
      // p + flow rather than a fresh T(p): the two differ by rounding, and
      // the one-to-one partnership should hold bitwise.
      pair.cloud_t1.points.push_back(s.p + pair.gt_flow->vectors[i]);
    }
  } else {
    // Fresh draws over the same surfaces; same per-region budgets.
    std::vector<Vec3> ground_t1;
    {
      std::vector<double> lengths;
      for (const auto& seg : spec.ground) {
        lengths.push_back(seg.x_max - seg.x_min);
      }
      const auto shares =
          allocate(scaled(spec.ground_points, spec.density_scale), lengths);
      for (std::size_t i = 0; i < spec.ground.size(); ++i) {
        sample_ground(spec.ground[i], spec.ground_y_extent, shares[i],
                      spec.noise_std, rng, ground_t1);
      }
    }
    for (const auto& g : ground_t1) pair.cloud_t1.points.push_back(ego.apply(g));
    for (const auto& b : bodies) {
      const auto local = sample_box_local(b.dimensions, b.rotation, b.center,
                                          b.points, rng);
      for (const auto& l : local) {
        if (b.occlude_back_fraction_t1 > 0) {
          const double cut = -b.dimensions.x() / 2 +
                             b.occlude_back_fraction_t1 * b.dimensions.x();
          if (l.x() < cut) continue;
        }
        Vec3 p = b.center + b.rotation * l;
        p += Vec3(spec.noise_std * rng.normal(), spec.noise_std * rng.normal(),
                  spec.noise_std * rng.normal());
        pair.cloud_t1.points.push_back(ego.apply(b.motion.apply(p)));
      }
    }
  }

  // --- tracks -----------------------------------------------------------
  for (const auto& b : bodies) {
    if (!b.tracked) continue;
    BoxTrack t0;
    t0.track_id = b.track_id;
    t0.frame_index = 0;
    t0.center = b.center;
    t0.dimensions = b.dimensions + Vec3::Constant(spec.box_padding);
    t0.rotation = b.rotation;
    pair.tracks_t.push_back(t0);

    BoxTrack t1 = t0;
    t1.frame_index = 1;
    t1.center = ego.apply(b.motion.apply(b.center));
    t1.rotation = ego.rotation * b.motion.rotation * b.rotation;
    pair.tracks_t1.push_back(t1);
  }

  pair.validate();
  return pair;
}

namespace {

RigidTransform translation(double x, double y, double z) {
  RigidTransform t;
  t.translation = Vec3(x, y, z);
  return t;
}

RigidTransform yaw_and_shift(double yaw, const Vec3& shift) {
  RigidTransform t;
  t.rotation = rotation_about_z(yaw);
  t.translation = shift;
  return t;
}

SynthObject car(const Vec3& center, double yaw, const RigidTransform& motion,
                int points) {
  SynthObject obj;
  obj.dimensions = Vec3(4.2, 1.9, 1.6);
  obj.center = center;  // callers pass z = ground + clearance + half height
  obj.yaw = yaw;
  obj.motion = motion;
  obj.points = points;
  return obj;
}

// The sensor sits at the origin, mounted kSensorHeight above the road, so
// ground surfaces live near z = -kSensorHeight. That matches real scans
// and means box undersides face away from the sensor and are never
// sampled: the lowest object returns are on the vertical sides.
constexpr double kSensorHeight = 1.8;
constexpr double kGroundZ = -kSensorHeight;
constexpr double kClearance = 0.5;  // body height above local ground

double car_z(double local_ground) {
  return local_ground + kClearance + 0.8;  // half of the 1.6 m body height
}

}  // namespace

SceneSpec preset_flat(std::uint64_t seed) {
  SceneSpec spec;
  spec.seed = seed;
  spec.ground = {{-30.0, 30.0, kGroundZ, kGroundZ}};
  spec.ground_points = 6000;
  spec.static_structure_count = 5;
  spec.static_structure_points = 1200;
  spec.ego_motion = yaw_and_shift(0.008, Vec3(0.45, 0.03, 0.0));

  const double z = car_z(kGroundZ);
  spec.objects = {
      car(Vec3(10.0, 3.0, z), 0.0, translation(0.6, 0.0, 0.0), 170),
      car(Vec3(-8.0, -6.0, z), M_PI / 2, translation(0.0, 0.45, 0.0), 160),
      car(Vec3(5.0, -9.0, z), 0.3, RigidTransform::identity(), 150),  // parked
  };
  return spec;
}

SceneSpec preset_step(std::uint64_t seed) {
  SceneSpec spec;
  spec.seed = seed;
  // Road level, curb/sidewalk 0.15 m up.
  spec.ground = {{-30.0, 4.0, kGroundZ, kGroundZ},
                 {4.0, 30.0, kGroundZ + 0.15, kGroundZ + 0.15}};
  spec.ground_points = 6400;
  spec.static_structure_count = 3;
  spec.static_structure_points = 800;
  spec.ego_motion = yaw_and_shift(0.006, Vec3(0.4, 0.0, 0.0));

  spec.objects = {
      car(Vec3(-6.0, -4.0, car_z(kGroundZ)), 0.0,
          translation(0.55, 0.05, 0.0), 170),
      car(Vec3(12.0, 6.0, car_z(kGroundZ + 0.15)), 0.2,
          translation(0.0, 0.5, 0.0), 160),
      car(Vec3(8.0, -8.0, car_z(kGroundZ)), -0.4, RigidTransform::identity(),
          150),
  };
  return spec;
}

SceneSpec preset_terrace(std::uint64_t seed) {
  SceneSpec spec;
  spec.seed = seed;
  // Two flat levels with a sharp 1.2 m step: hard for one plane, easy for
  // a coordinate network.
  spec.ground = {{-30.0, 10.0, kGroundZ, kGroundZ},
                 {10.0, 30.0, kGroundZ + 1.2, kGroundZ + 1.2}};
  spec.ground_points = 6400;
  spec.ego_motion = translation(0.3, 0.0, 0.0);

  spec.objects = {
      // Low-level objects near the step are the ones a global plane eats.
      car(Vec3(5.0, -3.0, car_z(kGroundZ)), 0.1, translation(0.5, 0.0, 0.0),
          170),
      car(Vec3(7.0, 7.0, car_z(kGroundZ)), -0.2, RigidTransform::identity(),
          150),
      car(Vec3(18.0, -5.0, car_z(kGroundZ + 1.2)), 0.0,
          translation(0.45, 0.1, 0.0), 160),
  };
  return spec;
}

SceneSpec preset_truck_occlusion(std::uint64_t seed) {
  SceneSpec spec;
  spec.seed = seed;
  spec.ground = {{-30.0, 30.0, kGroundZ, kGroundZ}};
  spec.ground_points = 5600;
  spec.static_structure_count = 3;
  spec.static_structure_points = 800;
  spec.structure_ring_min = 21.0;  // the 8 m truck needs extra clearance
  spec.ego_motion = translation(0.35, 0.0, 0.0);

  SynthObject truck;
  truck.dimensions = Vec3(8.0, 2.5, 3.0);
  truck.center = Vec3(12.0, 2.0, kGroundZ + kClearance + 1.5);
  truck.yaw = 0.0;
  truck.motion = translation(1.0, 0.0, 0.0);  // 10 m/s
  truck.points = 380;
  truck.occlude_back_fraction_t1 = 0.5;

  const double z = car_z(kGroundZ);
  spec.objects = {
      truck,
      car(Vec3(-10.0, -5.0, z), 0.0, translation(0.5, 0.0, 0.0), 160),
      car(Vec3(-4.0, 8.0, z), 1.2, RigidTransform::identity(), 150),
  };
  return spec;
}

SceneSpec preset_ratio_sweep(double dynamic_ratio, std::uint64_t seed) {
  if (dynamic_ratio < 0.0 || dynamic_ratio > 1.0) {
    throw InvalidArgumentError("preset_ratio_sweep: ratio outside [0,1]");
  }
  SceneSpec spec;
  spec.seed = seed;
  spec.ground = {{-30.0, 30.0, kGroundZ, kGroundZ}};
  spec.ground_points = 3000;
  spec.ego_motion = yaw_and_shift(0.009, Vec3(0.42, 0.04, 0.0));

  const int non_ground_budget = 3000;
  const int dynamic_budget = static_cast<int>(
      std::llround(dynamic_ratio * non_ground_budget));
  const int static_budget = non_ground_budget - dynamic_budget;

  spec.static_structure_count = 6;
  spec.static_structure_points = static_budget;

  if (dynamic_budget > 0) {
    // A crowd of walkers rather than cars. A car sliding 0.4 m mostly
    // aliases against its own long faces (nearest neighbours land on the
    // shifted surface, residual ~ 0), so it barely drags ICP. Person-sized
    // movers have no such faces: every point's nearest neighbour really is
    // displaced by the step, which is the failure mode a rising dynamic
    // ratio is supposed to exercise. Headings share a common direction
    // (within +/- 75 deg), the way real foot and road traffic does;
    // perfectly scattered headings would cancel into no net pull.
    const int walkers =
        std::max(1, static_cast<int>(std::llround(dynamic_budget / 70.0)));
    const std::vector<int> shares =
        allocate(dynamic_budget, std::vector<double>(walkers, 1.0));
    for (int k = 0; k < walkers; ++k) {
      if (shares[k] < 3) continue;
      const double angle = 2.39996 * k + 0.7;
      const double radius = 6.0 + 1.3 * (k % 7);
      const double heading = 0.35 + (std::fmod(0.618 * k, 1.0) - 0.5) * 2.62;
      const double speed = 1.3 + 0.8 * std::fmod(0.618 * (k + 1), 1.0);
      SynthObject walker;
      walker.dimensions = Vec3(0.5, 0.6, 1.7);
      walker.center = Vec3(radius * std::cos(angle), radius * std::sin(angle),
                           kGroundZ + kClearance + 0.85);
      walker.yaw = heading;
      walker.motion = translation(speed * 0.1 * std::cos(heading),
                                  speed * 0.1 * std::sin(heading), 0.0);
      walker.points = shares[k];
      spec.objects.push_back(walker);
    }
  }
  return spec;
}

}  // namespace sceneflow
