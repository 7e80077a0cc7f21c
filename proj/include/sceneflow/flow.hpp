#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "sceneflow/kd_tree.hpp"
#include "sceneflow/tiny_net.hpp"
#include "sceneflow/types.hpp"

namespace sceneflow {

struct FlowOptConfig {
  double learning_rate = 0.004;
  int patience = 100;  // 200 recommended for sparse / large scenes
  int max_iterations = 5000;
  double truncation = 2.0;            // chamfer cap, m
  double improvement_epsilon = 1e-6;  // absolute loss progress
  std::vector<int> hidden = {128, 128, 128, 128, 128, 128, 128, 128};
  std::uint64_t seed = 0;

  void validate() const;
};

// Truncated symmetric chamfer distance: mean over a of min(d^2, tau^2) to
// the nearest point of b, plus the same with the roles swapped.
double truncated_chamfer(const PointCloud& a, const PointCloud& b, double tau);

// One frozen correspondence: target index of the nearest neighbor and
// whether the pair was inside the truncation radius when captured.
struct Assignment {
  std::size_t index = 0;
  bool active = true;
};

// The four correspondence sets of the objective, captured so gradient
// probes can re-evaluate the loss inside the same smooth piece.
struct FlowAssignments {
  std::vector<Assignment> fw_a;   // deformed-source row -> target index
  std::vector<Assignment> fw_b;   // target row -> deformed-source row
  std::vector<Assignment> cyc_a;  // cycled row -> source index
  std::vector<Assignment> cyc_b;  // source row -> cycled row
};

struct ObjectiveEval {
  double loss = 0.0;
  TinyNet::Gradients fw_grads;
  TinyNet::Gradients bw_grads;
};

// Chamfer-plus-cycle objective over a fixed source/target pair. Holds the
// static nearest-neighbor indices; per-evaluation indices over the moving
// clouds are rebuilt inside evaluate().
class FlowProblem {
 public:
  FlowProblem(const PointCloud& source, const PointCloud& target, double tau);

  // Loss and parameter gradients at the given networks. When `fixed` is
  // null, correspondences are recomputed (and optionally captured into
  // `captured`); otherwise the provided ones are reused and the loss is a
  // smooth function of the parameters.
  ObjectiveEval evaluate(const TinyNet& fw, const TinyNet& bw,
                         const FlowAssignments* fixed = nullptr,
                         FlowAssignments* captured = nullptr) const;

  const Eigen::MatrixXd& source_matrix() const { return x_; }

 private:
  PointCloud source_, target_;
  std::unique_ptr<KdTree> source_tree_, target_tree_;
  double tau_;
  Eigen::MatrixXd x_;
};

struct FlowOptResult {
  FlowField flow;            // forward flow at the best parameters
  double best_loss = 0.0;
  int iterations = 0;        // optimization steps actually taken
  std::vector<double> loss_history;  // loss before each step
};

// Test-time optimization of forward/backward flow networks on one pair of
// (motion-compensated, ground-removed) clouds. Full-batch Adam, no weight
// decay; stops after `patience` iterations without absolute improvement
// better than improvement_epsilon; returns the best-loss snapshot.
FlowOptResult optimize_flow(const PointCloud& source, const PointCloud& target,
                            const FlowOptConfig& cfg);

// total_i = (T * p_i + residual_i) - p_i; undoes motion compensation so
// the output flow lives in the original first-frame coordinates.
FlowField compose_total_flow(const PointCloud& original,
                             const RigidTransform& t,
                             const FlowField& residual);

}  // namespace sceneflow
