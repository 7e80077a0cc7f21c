#include "sceneflow/ground.hpp"

#include <cmath>

#include "sceneflow/errors.hpp"

namespace sceneflow {

void GroundFitConfig::validate() const {
  if (hidden.empty()) {
    throw InvalidArgumentError("ground config: need at least one hidden layer");
  }
  for (int w : hidden) {
    if (w <= 0) throw InvalidArgumentError("ground config: bad hidden width");
  }
  if (learning_rate <= 0 || iterations <= 0 || huber_delta <= 0 ||
      removal_band <= 0 || coord_scale <= 0) {
    throw InvalidArgumentError("ground config: all values must be positive");
  }
}

HeightNet::HeightNet(TinyNet net, Vec3 centroid, double coord_scale)
    : net_(std::move(net)),
      cx_(centroid.x()),
      cy_(centroid.y()),
      scale_(coord_scale) {}

double HeightNet::predict(double x, double y) const {
  Eigen::MatrixXd in(1, 2);
  in << (x - cx_) / scale_, (y - cy_) / scale_;
  return net_.forward(in)(0, 0);
}

Eigen::VectorXd HeightNet::predict(const PointCloud& cloud) const {
  Eigen::MatrixXd in(static_cast<Eigen::Index>(cloud.size()), 2);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    in(static_cast<Eigen::Index>(i), 0) = (cloud.points[i].x() - cx_) / scale_;
    in(static_cast<Eigen::Index>(i), 1) = (cloud.points[i].y() - cy_) / scale_;
  }
  return net_.forward(in).col(0);
}

double height_loss(double h, double z, double delta) {
  if (delta <= 0) throw InvalidArgumentError("height_loss: delta must be > 0");
  if (z < h) {
    const double r = h - z;
    return r * r;
  }
  const double r = z - h;
  if (r <= delta) return 0.5 * r * r;
  return delta * (r - 0.5 * delta);
}

namespace {

// d height_loss / d h for the three branches above.
double height_loss_grad(double h, double z, double delta) {
  if (z < h) return 2.0 * (h - z);
  const double r = z - h;
  if (r <= delta) return -r;
  return -delta;
}

}  // namespace

HeightNet fit_height_map(const PointCloud& cloud, std::uint64_t seed,
                         const GroundFitConfig& cfg) {
  cfg.validate();
  if (cloud.empty()) {
    throw InvalidArgumentError("fit_height_map: empty cloud");
  }

  Vec3 centroid = Vec3::Zero();
  for (const auto& p : cloud.points) centroid += p;
  centroid /= static_cast<double>(cloud.size());

  const Eigen::Index n = static_cast<Eigen::Index>(cloud.size());
  Eigen::MatrixXd inputs(n, 2);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3& p = cloud.points[static_cast<std::size_t>(i)];
    inputs(i, 0) = (p.x() - centroid.x()) / cfg.coord_scale;
    inputs(i, 1) = (p.y() - centroid.y()) / cfg.coord_scale;
    z(i) = p.z();
  }

  std::vector<int> widths;
  widths.push_back(2);
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(1);
  TinyNet net = TinyNet::init(widths, seed);
  AdamState adam = AdamState::for_net(net, cfg.learning_rate);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    TinyNet::ForwardCache cache;
    Eigen::MatrixXd h = net.forward(inputs, cache);
    Eigen::MatrixXd upstream(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      upstream(i, 0) = height_loss_grad(h(i, 0), z(i), cfg.huber_delta);
    }
    TinyNet::Gradients grads = net.backward(cache, upstream);
    adam_step(net, adam, grads);
  }

  return HeightNet(std::move(net), centroid, cfg.coord_scale);
}

GroundMask segment_ground(const PointCloud& cloud, const HeightNet& net,
                          double band) {
  GroundMask mask(cloud.size(), false);
  if (cloud.empty()) return mask;
  Eigen::VectorXd heights = net.predict(cloud);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    mask[i] =
        cloud.points[i].z() - heights(static_cast<Eigen::Index>(i)) < band;
  }
  return mask;
}

GroundRemovalResult remove_ground(const PointCloud& cloud, std::uint64_t seed,
                                  const GroundFitConfig& cfg) {
  HeightNet net = fit_height_map(cloud, seed, cfg);
  GroundMask mask = segment_ground(cloud, net, cfg.removal_band);
  GroundRemovalResult out{PointCloud{}, {}, std::move(mask), std::move(net)};
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!out.mask[i]) {
      out.non_ground.points.push_back(cloud.points[i]);
      out.index_map.push_back(i);
    }
  }
  return out;
}

}  // namespace sceneflow
