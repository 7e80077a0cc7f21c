#pragma once

#include <cstdint>
#include <vector>

#include "sceneflow/tiny_net.hpp"
#include "sceneflow/types.hpp"

namespace sceneflow {

// Per-point ground flag, true = ground. Length always equals the cloud.
using GroundMask = std::vector<bool>;

struct GroundFitConfig {
  std::vector<int> hidden = {64, 64, 64};
  double learning_rate = 0.004;
  int iterations = 1000;
  double huber_delta = 0.1;   // m
  double removal_band = 0.3;  // points closer than this above ground go
  double coord_scale = 35.0;  // x,y divided by this after centering

  void validate() const;
};

// Height map h = f(x, y) represented by a small coordinate network. Inputs
// are centered on the fitted cloud's centroid and scaled before the net;
// the output is raw height in meters.
class HeightNet {
 public:
  HeightNet(TinyNet net, Vec3 centroid, double coord_scale);

  double predict(double x, double y) const;
  Eigen::VectorXd predict(const PointCloud& cloud) const;

  const TinyNet& net() const { return net_; }

 private:
  TinyNet net_;
  double cx_, cy_;
  double scale_;
};

// One-sided robust fit loss: squared error when the point lies below the
// predicted ground (h > z), Huber with knee `delta` above it. Keeps the
// surface hugging the lowest returns instead of averaging onto obstacles.
double height_loss(double h, double z, double delta);

// Full-batch Adam fit of the height map to the cloud's (x, y) -> z samples.
// Deterministic given the seed.
HeightNet fit_height_map(const PointCloud& cloud, std::uint64_t seed,
                         const GroundFitConfig& cfg = {});

// true iff z - f(x, y) < band; points below the surface are ground too.
GroundMask segment_ground(const PointCloud& cloud, const HeightNet& net,
                          double band = 0.3);

struct GroundRemovalResult {
  PointCloud non_ground;
  std::vector<std::size_t> index_map;  // non_ground row -> input row
  GroundMask mask;                     // over the input cloud
  HeightNet net;
};

GroundRemovalResult remove_ground(const PointCloud& cloud, std::uint64_t seed,
                                  const GroundFitConfig& cfg = {});

}  // namespace sceneflow
