#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Geometry>
#include <cmath>
#include <vector>

#include "sceneflow/errors.hpp"
#include "sceneflow/eval.hpp"
#include "sceneflow/rng.hpp"

using namespace sceneflow;

namespace {

Mat3 rot_z(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix();
}

BoxTrack make_box(const std::string& id, int frame, const Vec3& center,
                  const Vec3& dims, double yaw = 0.0) {
  BoxTrack b;
  b.track_id = id;
  b.frame_index = frame;
  b.center = center;
  b.dimensions = dims;
  b.rotation = rot_z(yaw);
  return b;
}

// Brute-force metrics computed with straight loops, as an independent
// reference implementation for the streaming accumulator.
MetricsReport reference_metrics(const FlowField& pred, const FlowField& gt,
                                const std::vector<PointClass>& classes,
                                const std::vector<bool>* validity) {
  MetricsReport out;
  struct Acc {
    std::vector<double> epe;
    std::size_t relax = 0, strict = 0;
  };
  Acc accs[3];
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (validity && !(*validity)[i]) {
      ++out.unlabeled_count;
      continue;
    }
    if (classes[i] == PointClass::Unlabeled) {
      ++out.unlabeled_count;
      continue;
    }
    Acc& a = accs[static_cast<int>(classes[i])];
    const double epe = (pred.vectors[i] - gt.vectors[i]).norm();
    const double mag = gt.vectors[i].norm();
    a.epe.push_back(epe);
    if (epe < 0.1 || (mag > 0.0 && epe / mag < 0.1)) ++a.relax;
    if (epe < 0.05 || (mag > 0.0 && epe / mag < 0.05)) ++a.strict;
  }
  auto finish = [](const Acc& a) -> std::optional<ClassMetrics> {
    if (a.epe.empty()) return std::nullopt;
    ClassMetrics m;
    m.count = a.epe.size();
    for (double e : a.epe) m.epe += e;
    m.epe /= static_cast<double>(m.count);
    m.acc_relax = static_cast<double>(a.relax) / static_cast<double>(m.count);
    m.acc_strict =
        static_cast<double>(a.strict) / static_cast<double>(m.count);
    return m;
  };
  out.dynamic_fg = finish(accs[0]);
  out.static_fg = finish(accs[1]);
  out.static_bg = finish(accs[2]);
  double sum = 0.0;
  int present = 0;
  for (const auto& c : {out.dynamic_fg, out.static_fg, out.static_bg}) {
    if (c) {
      sum += c->epe;
      ++present;
    }
  }
  if (present > 0) out.epe_avg3 = sum / present;
  return out;
}

void expect_same(const std::optional<ClassMetrics>& a,
                 const std::optional<ClassMetrics>& b) {
  REQUIRE(a.has_value() == b.has_value());
  if (!a) return;
  CHECK(a->count == b->count);
  CHECK(a->epe == doctest::Approx(b->epe).epsilon(1e-12));
  CHECK(a->acc_relax == doctest::Approx(b->acc_relax).epsilon(1e-12));
  CHECK(a->acc_strict == doctest::Approx(b->acc_strict).epsilon(1e-12));
}

}  // namespace

TEST_CASE("generate_flow_labels: static, tracked, and unmatched points") {
  ScenePair pair;
  pair.cloud_t = PointCloud{{
      Vec3(0, 10, 0),    // background
      Vec3(5, 0, 0.5),   // inside moving box "m"
      Vec3(-4, 2, 0.5),  // inside box "lost" with no t1 partner
  }};
  pair.cloud_t1 = pair.cloud_t;
  RigidTransform ego;
  ego.rotation = rot_z(0.02);
  ego.translation = Vec3(0.5, 0.1, 0.0);
  pair.ego_motion = ego;

  RigidTransform obj_motion;
  obj_motion.rotation = rot_z(0.05);
  obj_motion.translation = Vec3(1.0, 0.2, 0.0);

  const Vec3 dims(2.0, 2.0, 2.0);
  pair.tracks_t.push_back(make_box("m", 0, Vec3(5, 0, 0.5), dims));
  pair.tracks_t.push_back(make_box("lost", 0, Vec3(-4, 2, 0.5), dims));
  // Frame-t1 box for "m": its frame-t pose pushed through object+ego motion.
  BoxTrack m1 = make_box("m", 1, ego.apply(obj_motion.apply(Vec3(5, 0, 0.5))),
                         dims);
  m1.rotation = ego.rotation * obj_motion.rotation;
  pair.tracks_t1.push_back(m1);

  const LabelResult res = generate_flow_labels(pair);
  REQUIRE(res.flow.size() == 3);
  REQUIRE(res.valid.size() == 3);

  // Background follows the ego motion.
  CHECK(res.valid[0]);
  CHECK((res.flow.vectors[0] -
         (ego.apply(pair.cloud_t.points[0]) - pair.cloud_t.points[0]))
            .norm() < 1e-12);

  // Tracked point follows its box's frame-to-frame rigid motion.
  const Vec3 p = pair.cloud_t.points[1];
  const Mat3 r_track = m1.rotation * pair.tracks_t[0].rotation.transpose();
  const Vec3 t_track = m1.center - r_track * pair.tracks_t[0].center;
  CHECK(res.valid[1]);
  CHECK((res.flow.vectors[1] - (r_track * p + t_track - p)).norm() < 1e-12);

  // Unmatched box: invalid, flow zeroed.
  CHECK_FALSE(res.valid[2]);
  CHECK(res.flow.vectors[2] == Vec3::Zero());
}

TEST_CASE("generate_flow_labels requires odometry") {
  ScenePair pair;
  pair.cloud_t = PointCloud{{Vec3(0, 0, 0)}};
  pair.cloud_t1 = pair.cloud_t;
  CHECK_THROWS_AS(generate_flow_labels(pair), InvalidArgumentError);
}

TEST_CASE("classify_points splits the four strata") {
  ScenePair pair;
  pair.delta_t = 0.1;
  pair.cloud_t = PointCloud{{
      Vec3(0, 10, 0),   // static background
      Vec3(5, 0, 0.5),  // fast box point -> dynamic fg
      Vec3(-5, 0, 0.5), // parked box point -> static fg
      Vec3(2, 2, 0),    // invalid
  }};
  pair.cloud_t1 = pair.cloud_t;
  RigidTransform ego;
  ego.translation = Vec3(0.3, 0.0, 0.0);
  pair.ego_motion = ego;
  const Vec3 dims(2.0, 2.0, 2.0);
  pair.tracks_t.push_back(make_box("fast", 0, Vec3(5, 0, 0.5), dims));
  pair.tracks_t.push_back(make_box("parked", 0, Vec3(-5, 0, 0.5), dims));

  FlowField labels(4);
  labels.vectors[0] = Vec3(0.3, 0.0, 0.0);   // exactly ego
  labels.vectors[1] = Vec3(0.3 + 0.12, 0.0, 0.0);  // 1.2 m/s over ego
  labels.vectors[2] = Vec3(0.3 + 0.03, 0.0, 0.0);  // 0.3 m/s: below 0.5
  labels.vectors[3] = Vec3(0.0, 0.0, 0.0);
  std::vector<bool> validity = {true, true, true, false};

  const auto classes = classify_points(pair, labels, 0.5, &validity);
  REQUIRE(classes.size() == 4);
  CHECK(classes[0] == PointClass::StaticBackground);
  CHECK(classes[1] == PointClass::DynamicForeground);
  CHECK(classes[2] == PointClass::StaticForeground);
  CHECK(classes[3] == PointClass::Unlabeled);

  // Threshold is a closed bound: exactly 0.5 m/s counts as dynamic.
  labels.vectors[1] = Vec3(0.3 + 0.05, 0.0, 0.0);
  const auto at = classify_points(pair, labels, 0.5, &validity);
  CHECK(at[1] == PointClass::DynamicForeground);
}

TEST_CASE("accuracy branch arithmetic") {
  // epe = 0.09 against |gt| = 2: relaxed hits via the absolute branch,
  // strict hits via the relative branch (0.045 < 0.05).
  FlowField gt(1), pred(1);
  gt.vectors[0] = Vec3(2.0, 0.0, 0.0);
  pred.vectors[0] = Vec3(2.09, 0.0, 0.0);
  std::vector<PointClass> cls = {PointClass::DynamicForeground};

  MetricsReport rep = compute_metrics(pred, gt, cls);
  REQUIRE(rep.dynamic_fg.has_value());
  CHECK(rep.dynamic_fg->epe == doctest::Approx(0.09).epsilon(1e-12));
  CHECK(rep.dynamic_fg->acc_relax == 1.0);
  CHECK(rep.dynamic_fg->acc_strict == 1.0);

  // Zero-magnitude ground truth skips the relative branch entirely.
  gt.vectors[0] = Vec3::Zero();
  pred.vectors[0] = Vec3(0.07, 0.0, 0.0);
  rep = compute_metrics(pred, gt, cls);
  CHECK(rep.dynamic_fg->acc_relax == 1.0);   // 0.07 < 0.1
  CHECK(rep.dynamic_fg->acc_strict == 0.0);  // 0.07 >= 0.05, no relative
}

TEST_CASE("compute_metrics equals the brute-force reference") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(60);
    FlowField pred(n), gt(n);
    std::vector<PointClass> cls(n);
    std::vector<bool> validity(n);
    for (std::size_t i = 0; i < n; ++i) {
      gt.vectors[i] =
          0.5 * Vec3(rng.normal(), rng.normal(), rng.normal());
      if (rng.uniform() < 0.2) gt.vectors[i] = Vec3::Zero();
      pred.vectors[i] =
          gt.vectors[i] + 0.1 * Vec3(rng.normal(), rng.normal(), rng.normal());
      cls[i] = static_cast<PointClass>(rng.index(4));
      validity[i] = rng.uniform() < 0.9;
    }
    const MetricsReport got = compute_metrics(pred, gt, cls, &validity);
    const MetricsReport want = reference_metrics(pred, gt, cls, &validity);
    expect_same(got.dynamic_fg, want.dynamic_fg);
    expect_same(got.static_fg, want.static_fg);
    expect_same(got.static_bg, want.static_bg);
    CHECK(got.unlabeled_count == want.unlabeled_count);
    REQUIRE(got.epe_avg3.has_value() == want.epe_avg3.has_value());
    if (got.epe_avg3) {
      CHECK(*got.epe_avg3 == doctest::Approx(*want.epe_avg3).epsilon(1e-12));
    }
  }
}

TEST_CASE("accumulator merge equals one-shot accumulation") {
  Rng rng(88);
  const std::size_t n = 400;
  FlowField pred(n), gt(n);
  std::vector<PointClass> cls(n);
  for (std::size_t i = 0; i < n; ++i) {
    gt.vectors[i] = Vec3(rng.normal(), rng.normal(), 0.0);
    pred.vectors[i] = gt.vectors[i] + Vec3(0.05 * rng.normal(), 0.0, 0.0);
    cls[i] = static_cast<PointClass>(rng.index(3));
  }

  MetricsAccumulator whole;
  whole.add(pred, gt, cls);

  // The same points split across two accumulators, then merged.
  auto slice = [&](std::size_t lo, std::size_t hi) {
    FlowField p, g;
    std::vector<PointClass> c;
    for (std::size_t i = lo; i < hi; ++i) {
      p.vectors.push_back(pred.vectors[i]);
      g.vectors.push_back(gt.vectors[i]);
      c.push_back(cls[i]);
    }
    MetricsAccumulator acc;
    acc.add(p, g, c);
    return acc;
  };
  MetricsAccumulator first = slice(0, 150);
  const MetricsAccumulator second = slice(150, n);
  first.merge(second);

  const MetricsReport a = whole.report();
  const MetricsReport b = first.report();
  expect_same(a.dynamic_fg, b.dynamic_fg);
  expect_same(a.static_fg, b.static_fg);
  expect_same(a.static_bg, b.static_bg);
}

TEST_CASE("metrics report json shape") {
  FlowField gt(1), pred(1);
  gt.vectors[0] = Vec3(1.0, 0.0, 0.0);
  pred.vectors[0] = Vec3(1.0, 0.0, 0.0);
  std::vector<PointClass> cls = {PointClass::StaticBackground};
  const std::string json = compute_metrics(pred, gt, cls).to_json();
  CHECK(json.find("\"epe\"") != std::string::npos);
  CHECK(json.find("\"stat_bg\"") != std::string::npos);
  CHECK(json.find("\"dyn_fg\":null") != std::string::npos);  // class absent
  CHECK(json.find("\"counts\"") != std::string::npos);
}

TEST_CASE("expected_correspondences values and properties") {
  CHECK(expected_correspondences(90000, 8192) ==
        doctest::Approx(745.654044).epsilon(1e-6));
  CHECK(expected_correspondences(100, 100) == doctest::Approx(100.0));
  CHECK(expected_correspondences(1000, 10) == doctest::Approx(0.1));
  // Monotone in the sample count.
  double prev = 0.0;
  for (std::size_t s : {1000u, 2000u, 4000u, 8000u}) {
    const double v = expected_correspondences(90000, s);
    CHECK(v > prev);
    prev = v;
  }
  CHECK_THROWS_AS(expected_correspondences(0, 0), InvalidArgumentError);
  CHECK_THROWS_AS(expected_correspondences(100, 101), InvalidArgumentError);
}

TEST_CASE("gt_chamfer_violation zero and positive cases") {
  ScenePair pair;
  pair.cloud_t = PointCloud{{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)}};
  pair.gt_flow = FlowField(3);
  pair.gt_flow->vectors = {Vec3(0.1, 0, 0), Vec3(0.1, 0, 0), Vec3(0.1, 0, 0)};
  pair.cloud_t1 = PointCloud{{Vec3(0.1, 0, 0), Vec3(1.1, 0, 0),
                              Vec3(0.1, 1, 0)}};
  CHECK(gt_chamfer_violation(pair) == 0.0);

  // Perturb one second-frame point by 0.3: fwd mean rises by 0.1, bwd by
  // 0.1, so the symmetric mean is 0.1.
  pair.cloud_t1.points[2] += Vec3(0.0, 0.3, 0.0);
  CHECK(gt_chamfer_violation(pair) == doctest::Approx(0.1).epsilon(1e-12));

  ScenePair missing;
  missing.cloud_t = pair.cloud_t;
  missing.cloud_t1 = pair.cloud_t1;
  CHECK_THROWS_AS(gt_chamfer_violation(missing), InvalidArgumentError);
}

TEST_CASE("resample_dynamic_ratio hits the requested mixture") {
  Rng rng(99);
  ScenePair pair;
  RigidTransform ego;
  ego.translation = Vec3(0.2, 0.0, 0.0);
  pair.ego_motion = ego;
  pair.delta_t = 0.1;
  pair.gt_flow = FlowField();

  // 600 static + 400 dynamic candidate points, both frames identical
  // structure so frame-1 classification works through the tracks.
  const Vec3 dims(40.0, 40.0, 4.0);
  pair.tracks_t.push_back(make_box("d", 0, Vec3(100, 0, 0), dims));
  pair.tracks_t1.push_back(make_box("d", 1, Vec3(101.2, 0, 0), dims));

  for (int i = 0; i < 600; ++i) {
    const Vec3 p(rng.uniform(-20, 20), rng.uniform(-20, 20), 0.0);
    pair.cloud_t.points.push_back(p);
    pair.gt_flow->vectors.push_back(ego.apply(p) - p);
    pair.cloud_t1.points.push_back(ego.apply(p));
  }
  for (int i = 0; i < 400; ++i) {
    const Vec3 p(100.0 + rng.uniform(-15, 15), rng.uniform(-15, 15), 0.0);
    pair.cloud_t.points.push_back(p);
    pair.gt_flow->vectors.push_back(Vec3(1.2, 0, 0) + ego.apply(p) - p);
    pair.cloud_t1.points.push_back(ego.apply(p + Vec3(1.2, 0, 0)));
  }

  for (double ratio : {0.0, 0.1, 0.25}) {
    const ScenePair out = resample_dynamic_ratio(pair, ratio, 500, 42);
    CHECK(out.cloud_t.size() == 500);
    CHECK(out.cloud_t1.size() == 500);
    std::size_t dyn = 0;
    for (std::size_t i = 0; i < out.cloud_t.size(); ++i) {
      const Vec3 ego_flow =
          ego.apply(out.cloud_t.points[i]) - out.cloud_t.points[i];
      if ((out.gt_flow->vectors[i] - ego_flow).norm() / 0.1 >= 0.5) ++dyn;
    }
    CHECK(dyn == static_cast<std::size_t>(std::llround(ratio * 500)));
  }

  // Deterministic in the seed.
  const ScenePair a = resample_dynamic_ratio(pair, 0.2, 400, 7);
  const ScenePair b = resample_dynamic_ratio(pair, 0.2, 400, 7);
  REQUIRE(a.cloud_t.size() == b.cloud_t.size());
  for (std::size_t i = 0; i < a.cloud_t.size(); ++i) {
    CHECK(a.cloud_t.points[i] == b.cloud_t.points[i]);
  }

  // Asking for more dynamic points than exist fails loudly.
  CHECK_THROWS_AS(resample_dynamic_ratio(pair, 0.9, 600, 1),
                  InvalidArgumentError);
}
