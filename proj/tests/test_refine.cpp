#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Geometry>
#include <cmath>
#include <vector>

#include "sceneflow/errors.hpp"
#include "sceneflow/refine.hpp"
#include "sceneflow/rng.hpp"

using namespace sceneflow;

namespace {

Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

RigidTransform random_transform(Rng& rng, double max_angle, double max_shift) {
  Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  if (axis.norm() < 1e-6) axis = Vec3::UnitZ();
  RigidTransform t;
  t.rotation = axis_angle(axis, (2.0 * rng.uniform() - 1.0) * max_angle);
  t.translation = Vec3((2.0 * rng.uniform() - 1.0) * max_shift,
                       (2.0 * rng.uniform() - 1.0) * max_shift,
                       (2.0 * rng.uniform() - 1.0) * max_shift);
  return t;
}

std::vector<Vec3> random_points(Rng& rng, std::size_t n, double spread) {
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    pts.emplace_back(rng.normal() * spread, rng.normal() * spread,
                     rng.normal() * spread);
  }
  return pts;
}

double alignment_cost(const std::vector<Vec3>& pts,
                      const std::vector<Vec3>& targets,
                      const RigidTransform& t) {
  double cost = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    cost += (t.apply(pts[i]) - targets[i]).squaredNorm();
  }
  return cost;
}

// Dense cube of points that DBSCAN (eps 0.4, min_points 10) sees as one
// cluster: grid spacing 0.25 well under eps.
std::vector<Vec3> blob(const Vec3& corner, int nx, int ny, int nz) {
  std::vector<Vec3> pts;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      for (int k = 0; k < nz; ++k)
        pts.push_back(corner + 0.25 * Vec3(i, j, k));
  return pts;
}

}  // namespace

TEST_CASE("kabsch recovers an exact rigid transform") {
  for (std::uint64_t seed : {11u, 22u, 33u, 44u}) {
    Rng rng(seed);
    const auto pts = random_points(rng, 30, 2.0);
    const RigidTransform truth = random_transform(rng, 1.5, 4.0);
    std::vector<Vec3> targets;
    for (const auto& p : pts) targets.push_back(truth.apply(p));

    const RigidTransform fit = kabsch(pts, targets);
    CHECK((fit.rotation - truth.rotation).norm() < 1e-10);
    CHECK((fit.translation - truth.translation).norm() < 1e-10);
  }
}

TEST_CASE("kabsch with three points fits exactly") {
  Rng rng(7);
  const std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(1, 0, 0),
                                 Vec3(0.3, 1.2, 0.4)};
  const RigidTransform truth = random_transform(rng, 0.8, 2.0);
  std::vector<Vec3> targets;
  for (const auto& p : pts) targets.push_back(truth.apply(p));
  const RigidTransform fit = kabsch(pts, targets);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK((fit.apply(pts[i]) - targets[i]).norm() < 1e-10);
  }
}

TEST_CASE("kabsch never returns a reflection") {
  // Mirrored targets: the best orthogonal map is an improper reflection,
  // so the determinant correction has to kick in.
  const std::vector<Vec3> pts = {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1),
                                 Vec3(1, 1, 1)};
  std::vector<Vec3> targets;
  for (const auto& p : pts) targets.emplace_back(-p.x(), p.y(), p.z());
  const RigidTransform fit = kabsch(pts, targets);
  CHECK(fit.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-9));
  fit.validate();
}

TEST_CASE("kabsch beats random candidate transforms on noisy data") {
  Rng rng(99);
  const auto pts = random_points(rng, 40, 3.0);
  const RigidTransform truth = random_transform(rng, 0.9, 2.0);
  std::vector<Vec3> targets;
  for (const auto& p : pts) {
    targets.push_back(truth.apply(p) +
                      0.05 * Vec3(rng.normal(), rng.normal(), rng.normal()));
  }
  const RigidTransform fit = kabsch(pts, targets);
  const double best = alignment_cost(pts, targets, fit);
  for (int trial = 0; trial < 100; ++trial) {
    RigidTransform cand = fit;
    Vec3 axis(rng.normal(), rng.normal(), rng.normal());
    cand.rotation =
        axis_angle(axis, 0.2 * rng.uniform()) * cand.rotation;
    cand.translation += 0.2 * Vec3(rng.normal(), rng.normal(), rng.normal());
    CHECK(alignment_cost(pts, targets, cand) >= best - 1e-12);
  }
}

TEST_CASE("kabsch input validation") {
  const std::vector<Vec3> three = {Vec3(0, 0, 0), Vec3(1, 0, 0),
                                   Vec3(0, 1, 0)};
  CHECK_THROWS_AS(kabsch(three, {Vec3(0, 0, 0)}), InvalidArgumentError);
  CHECK_THROWS_AS(kabsch({Vec3(0, 0, 0), Vec3(1, 1, 1)},
                         {Vec3(0, 0, 0), Vec3(1, 1, 1)}),
                  InvalidArgumentError);
  // Collinear points leave the rotation about the line unconstrained.
  const std::vector<Vec3> line = {Vec3(0, 0, 0), Vec3(1, 2, 3),
                                  Vec3(2, 4, 6), Vec3(3, 6, 9)};
  CHECK_THROWS_AS(kabsch(line, line), DegenerateGeometryError);
}

TEST_CASE("ransac_rigid survives 25 percent corrupted flows") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(1000 + seed);
    auto pts_vec = blob(Vec3(4, -1, 0), 4, 5, 3);  // 60 points
    const RigidTransform truth = random_transform(rng, 0.05, 0.3);

    std::vector<Vec3> flows;
    for (const auto& p : pts_vec) flows.push_back(truth.apply(p) - p);

    const std::size_t corrupt = pts_vec.size() / 4;
    for (std::size_t i = 0; i < corrupt; ++i) {
      Vec3 junk;
      do {
        junk = Vec3(4.0 * rng.uniform() - 2.0, 4.0 * rng.uniform() - 2.0,
                    4.0 * rng.uniform() - 2.0);
      } while ((junk - flows[i]).norm() < 0.3);
      flows[i] = junk;
    }

    RefineConfig cfg;
    cfg.seed = 77 + seed;
    const ClusterRigidFit fit = ransac_rigid(pts_vec, flows, cfg);
    CHECK(fit.inlier_count >= pts_vec.size() - corrupt);
    CHECK((fit.transform.rotation - truth.rotation).norm() < 1e-9);
    CHECK((fit.transform.translation - truth.translation).norm() < 1e-9);
  }
}

TEST_CASE("ransac_rigid is deterministic in its seed") {
  Rng rng(5);
  auto pts = blob(Vec3(0, 0, 0), 4, 4, 3);
  const RigidTransform truth = random_transform(rng, 0.1, 0.4);
  std::vector<Vec3> flows;
  for (const auto& p : pts) {
    flows.push_back(truth.apply(p) - p +
                    0.01 * Vec3(rng.normal(), rng.normal(), rng.normal()));
  }
  RefineConfig cfg;
  cfg.seed = 42;
  const ClusterRigidFit a = ransac_rigid(pts, flows, cfg);
  const ClusterRigidFit b = ransac_rigid(pts, flows, cfg);
  CHECK(a.transform.rotation == b.transform.rotation);
  CHECK(a.transform.translation == b.transform.translation);
  CHECK(a.inlier_count == b.inlier_count);
}

TEST_CASE("ransac_rigid on exactly three points is a single exact fit") {
  const std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  RigidTransform truth;
  truth.rotation = axis_angle(Vec3::UnitZ(), 0.2);
  truth.translation = Vec3(0.5, -0.2, 0.1);
  std::vector<Vec3> flows;
  for (const auto& p : pts) flows.push_back(truth.apply(p) - p);
  const ClusterRigidFit fit = ransac_rigid(pts, flows, RefineConfig{});
  CHECK(fit.inlier_count == 3);
  CHECK((fit.transform.rotation - truth.rotation).norm() < 1e-9);
  CHECK((fit.transform.translation - truth.translation).norm() < 1e-9);
}

TEST_CASE("refine_flow snaps slow clusters to exactly zero") {
  Rng rng(123);
  auto pts = blob(Vec3(2, 3, 0), 4, 4, 3);  // one cluster of 48
  PointCloud cloud{pts};
  FlowField flow(pts.size());
  // Residual flow of a parked object: tiny drift plus optimizer noise,
  // well under 0.5 m/s * 0.1 s = 0.05 m.
  for (auto& v : flow.vectors) {
    v = Vec3(0.004, -0.002, 0.001) +
        0.005 * Vec3(rng.normal(), rng.normal(), rng.normal());
  }

  RefineConfig cfg;
  const RefineResult res = refine_flow(cloud, flow, cfg);
  REQUIRE(res.clusters.cluster_count == 1);
  REQUIRE(res.fits.size() == 1);
  CHECK(res.fits[0].snapped_to_identity);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(res.flow.vectors[i] == Vec3::Zero());
  }
}

TEST_CASE("refine_flow repairs corrupted members of a moving cluster") {
  Rng rng(321);
  auto pts = blob(Vec3(6, -2, 0.5), 5, 4, 3);  // 60 points
  PointCloud cloud{pts};

  RigidTransform motion;
  motion.rotation = axis_angle(Vec3::UnitZ(), 0.015);
  motion.translation = Vec3(0.12, 0.03, 0.0);  // ~1.2 m/s, clearly moving

  FlowField flow(pts.size());
  std::vector<Vec3> truth(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    truth[i] = motion.apply(pts[i]) - pts[i];
    flow.vectors[i] = truth[i];
  }
  // Corrupt a fifth of the members with junk far outside the inlier band.
  for (std::size_t i = 0; i < pts.size(); i += 5) {
    flow.vectors[i] += Vec3(0.9 * rng.normal() + 1.0, 0.9 * rng.normal(),
                            0.9 * rng.normal());
  }

  const RefineResult res = refine_flow(cloud, flow, RefineConfig{});
  REQUIRE(res.clusters.cluster_count == 1);
  CHECK_FALSE(res.fits[0].snapped_to_identity);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK((res.flow.vectors[i] - truth[i]).norm() < 1e-8);
  }
}

TEST_CASE("refine_flow leaves noise points untouched") {
  auto pts = blob(Vec3(0, 0, 0), 4, 4, 3);
  const std::size_t blob_size = pts.size();
  // Far-away strays, each isolated: DBSCAN noise.
  pts.push_back(Vec3(20, 0, 0));
  pts.push_back(Vec3(0, 20, 0));
  pts.push_back(Vec3(-20, -20, 5));

  PointCloud cloud{pts};
  FlowField flow(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    flow.vectors[i] = Vec3(0.31 * static_cast<double>(i), -0.7, 0.25);
  }

  const RefineResult res = refine_flow(cloud, flow, RefineConfig{});
  for (std::size_t i = blob_size; i < pts.size(); ++i) {
    CHECK(res.clusters.labels[i] == -1);
    CHECK(res.flow.vectors[i] == flow.vectors[i]);  // bitwise: untouched
  }
}

TEST_CASE("refine_flow handles several clusters with distinct motions") {
  Rng rng(987);
  auto moving = blob(Vec3(8, 0, 0), 4, 4, 3);
  auto parked = blob(Vec3(-8, 4, 0), 4, 4, 3);
  std::vector<Vec3> pts = moving;
  pts.insert(pts.end(), parked.begin(), parked.end());
  PointCloud cloud{pts};

  RigidTransform motion;
  motion.translation = Vec3(0.0, 0.2, 0.0);  // 2 m/s sideways

  FlowField flow(pts.size());
  for (std::size_t i = 0; i < moving.size(); ++i) {
    flow.vectors[i] = motion.apply(pts[i]) - pts[i] +
                      0.01 * Vec3(rng.normal(), rng.normal(), rng.normal());
  }
  for (std::size_t i = moving.size(); i < pts.size(); ++i) {
    flow.vectors[i] = 0.008 * Vec3(rng.normal(), rng.normal(), rng.normal());
  }

  const RefineResult res = refine_flow(cloud, flow, RefineConfig{});
  REQUIRE(res.clusters.cluster_count == 2);

  int snapped = 0, kept = 0;
  for (const auto& fit : res.fits) {
    if (fit.snapped_to_identity) ++snapped;
    else ++kept;
  }
  CHECK(snapped == 1);
  CHECK(kept == 1);

  for (std::size_t i = 0; i < moving.size(); ++i) {
    CHECK((res.flow.vectors[i] - (motion.apply(pts[i]) - pts[i])).norm() <
          0.05);
  }
  for (std::size_t i = moving.size(); i < pts.size(); ++i) {
    CHECK(res.flow.vectors[i] == Vec3::Zero());
  }
}

TEST_CASE("refine_flow is deterministic") {
  Rng rng(555);
  auto pts = blob(Vec3(1, 1, 1), 5, 4, 3);
  PointCloud cloud{pts};
  FlowField flow(pts.size());
  for (auto& v : flow.vectors) {
    v = Vec3(0.1, 0.0, 0.0) +
        0.05 * Vec3(rng.normal(), rng.normal(), rng.normal());
  }
  RefineConfig cfg;
  cfg.seed = 9;
  const RefineResult a = refine_flow(cloud, flow, cfg);
  const RefineResult b = refine_flow(cloud, flow, cfg);
  REQUIRE(a.flow.size() == b.flow.size());
  for (std::size_t i = 0; i < a.flow.size(); ++i) {
    CHECK(a.flow.vectors[i] == b.flow.vectors[i]);
  }
  CHECK(a.clusters.labels == b.clusters.labels);
}

TEST_CASE("refine config validation") {
  RefineConfig cfg;
  cfg.ransac_iterations = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgumentError);
  cfg = RefineConfig{};
  cfg.inlier_threshold = -0.1;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgumentError);
  cfg = RefineConfig{};
  cfg.delta_t = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgumentError);
  CHECK_THROWS_AS(
      refine_flow(PointCloud{}, FlowField(3), RefineConfig{}),
      InvalidArgumentError);
}
