#include "sceneflow/flow.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "sceneflow/errors.hpp"
#include "sceneflow/rng.hpp"

namespace sceneflow {

void FlowOptConfig::validate() const {
  if (learning_rate <= 0 || patience < 1 || max_iterations < 1 ||
      truncation <= 0 || improvement_epsilon < 0) {
    throw InvalidArgumentError("flow config: bad optimization settings");
  }
  if (hidden.empty()) {
    throw InvalidArgumentError("flow config: need at least one hidden layer");
  }
  for (int w : hidden) {
    if (w <= 0) throw InvalidArgumentError("flow config: bad hidden width");
  }
}

double truncated_chamfer(const PointCloud& a, const PointCloud& b,
                         double tau) {
  if (a.empty() || b.empty()) {
    throw InvalidArgumentError("truncated_chamfer: empty cloud");
  }
  if (tau <= 0) throw InvalidArgumentError("truncated_chamfer: tau must be > 0");
  const double cap = tau * tau;
  const KdTree tree_a(a), tree_b(b);
  double sum_a = 0.0;
  for (const auto& p : a.points) {
    const double d = tree_b.nearest(p).distance;
    sum_a += std::min(d * d, cap);
  }
  double sum_b = 0.0;
  for (const auto& q : b.points) {
    const double d = tree_a.nearest(q).distance;
    sum_b += std::min(d * d, cap);
  }
  return sum_a / static_cast<double>(a.size()) +
         sum_b / static_cast<double>(b.size());
}

namespace {

PointCloud matrix_to_cloud(const Eigen::MatrixXd& m) {
  PointCloud cloud;
  cloud.points.resize(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    cloud.points[static_cast<std::size_t>(i)] = m.row(i).transpose();
  }
  return cloud;
}

// One direction of the truncated chamfer between a moving matrix cloud and
// a fixed data cloud, with the gradient accumulated on the moving side.
// moving_to_data: correspondences from moving rows into the data cloud.
// data_to_moving: correspondences from data points into moving rows.
struct DirectedResult {
  double loss = 0.0;
};

DirectedResult moving_against_data(
    const Eigen::MatrixXd& moving, const PointCloud& data,
    const KdTree& data_tree, double cap,
    const std::vector<Assignment>* fixed, std::vector<Assignment>* captured,
    Eigen::MatrixXd& grad) {
  DirectedResult out;
  const double inv_n = 1.0 / static_cast<double>(moving.rows());
  for (Eigen::Index i = 0; i < moving.rows(); ++i) {
    const Vec3 p = moving.row(i).transpose();
    Assignment a;
    if (fixed) {
      a = (*fixed)[static_cast<std::size_t>(i)];
    } else {
      const NearestResult nn = data_tree.nearest(p);
      a.index = nn.index;
      a.active = nn.distance * nn.distance < cap;
    }
    if (captured) captured->push_back(a);
    if (a.active) {
      const Vec3 diff = p - data.points[a.index];
      out.loss += diff.squaredNorm() * inv_n;
      grad.row(i) += 2.0 * inv_n * diff.transpose();
    } else {
      out.loss += cap * inv_n;
    }
  }
  return out;
}

DirectedResult data_against_moving(
    const PointCloud& data, const Eigen::MatrixXd& moving,
    const KdTree* moving_tree, double cap,
    const std::vector<Assignment>* fixed, std::vector<Assignment>* captured,
    Eigen::MatrixXd& grad) {
  DirectedResult out;
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (std::size_t j = 0; j < data.size(); ++j) {
    const Vec3 q = data.points[j];
    Assignment a;
    if (fixed) {
      a = (*fixed)[j];
    } else {
      const NearestResult nn = moving_tree->nearest(q);
      a.index = nn.index;
      a.active = nn.distance * nn.distance < cap;
    }
    if (captured) captured->push_back(a);
    if (a.active) {
      const Eigen::Index k = static_cast<Eigen::Index>(a.index);
      const Vec3 diff = moving.row(k).transpose() - q;
      out.loss += diff.squaredNorm() * inv_n;
      grad.row(k) += 2.0 * inv_n * diff.transpose();
    } else {
      out.loss += cap * inv_n;
    }
  }
  return out;
}

}  // namespace

FlowProblem::FlowProblem(const PointCloud& source, const PointCloud& target,
                         double tau)
    : source_(source), target_(target), tau_(tau) {
  if (source_.empty() || target_.empty()) {
    throw InvalidArgumentError("flow optimization: empty cloud");
  }
  if (tau_ <= 0) throw InvalidArgumentError("flow optimization: tau <= 0");
  source_tree_ = std::make_unique<KdTree>(source_);
  target_tree_ = std::make_unique<KdTree>(target_);
  x_.resize(static_cast<Eigen::Index>(source_.size()), 3);
  for (std::size_t i = 0; i < source_.size(); ++i) {
    x_.row(static_cast<Eigen::Index>(i)) = source_.points[i].transpose();
  }
}

ObjectiveEval FlowProblem::evaluate(const TinyNet& fw, const TinyNet& bw,
                                    const FlowAssignments* fixed,
                                    FlowAssignments* captured) const {
  const double cap = tau_ * tau_;

  TinyNet::ForwardCache fw_cache, bw_cache;
  const Eigen::MatrixXd f = fw.forward(x_, fw_cache);
  const Eigen::MatrixXd deformed = x_ + f;             // g_fw(source)
  const Eigen::MatrixXd g = bw.forward(deformed, bw_cache);
  const Eigen::MatrixXd cycled = deformed + g;         // g_bw(g_fw(source))

  // Per-evaluation indices over the two moving clouds. Skipped when the
  // correspondences are supplied by the caller.
  std::unique_ptr<KdTree> deformed_tree, cycled_tree;
  if (!fixed) {
    deformed_tree = std::make_unique<KdTree>(matrix_to_cloud(deformed));
    cycled_tree = std::make_unique<KdTree>(matrix_to_cloud(cycled));
  }

  if (captured) {
    captured->fw_a.clear();
    captured->fw_b.clear();
    captured->cyc_a.clear();
    captured->cyc_b.clear();
  }

  Eigen::MatrixXd d_deformed = Eigen::MatrixXd::Zero(deformed.rows(), 3);
  Eigen::MatrixXd d_cycled = Eigen::MatrixXd::Zero(cycled.rows(), 3);

  double loss = 0.0;
  loss += moving_against_data(deformed, target_, *target_tree_, cap,
                              fixed ? &fixed->fw_a : nullptr,
                              captured ? &captured->fw_a : nullptr, d_deformed)
              .loss;
  loss += data_against_moving(target_, deformed, deformed_tree.get(), cap,
                              fixed ? &fixed->fw_b : nullptr,
                              captured ? &captured->fw_b : nullptr, d_deformed)
              .loss;
  loss += moving_against_data(cycled, source_, *source_tree_, cap,
                              fixed ? &fixed->cyc_a : nullptr,
                              captured ? &captured->cyc_a : nullptr, d_cycled)
              .loss;
  loss += data_against_moving(source_, cycled, cycled_tree.get(), cap,
                              fixed ? &fixed->cyc_b : nullptr,
                              captured ? &captured->cyc_b : nullptr, d_cycled)
              .loss;

  ObjectiveEval out;
  out.loss = loss;

  // cycled = deformed + bw(deformed): the cycle gradient reaches the
  // deformed cloud both directly and through the backward net's input
  // sensitivity.
  out.bw_grads = bw.backward(bw_cache, d_cycled);
  d_deformed += d_cycled + out.bw_grads.inputs;
  out.fw_grads = fw.backward(fw_cache, d_deformed);
  return out;
}

FlowOptResult optimize_flow(const PointCloud& source, const PointCloud& target,
                            const FlowOptConfig& cfg) {
  cfg.validate();
  const FlowProblem problem(source, target, cfg.truncation);

  std::vector<int> widths;
  widths.push_back(3);
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(3);
  TinyNet fw = TinyNet::init(widths, derive_seed(cfg.seed, 0));
  TinyNet bw = TinyNet::init(widths, derive_seed(cfg.seed, 1));
  AdamState fw_adam = AdamState::for_net(fw, cfg.learning_rate);
  AdamState bw_adam = AdamState::for_net(bw, cfg.learning_rate);

  FlowOptResult result;
  TinyNet best_fw = fw;
  double best_loss = std::numeric_limits<double>::infinity();
  int stale = 0;

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    const ObjectiveEval eval = problem.evaluate(fw, bw);
    if (!std::isfinite(eval.loss)) {
      throw NumericError("flow optimization produced a non-finite loss at iteration " +
                         std::to_string(iter));
    }
    result.loss_history.push_back(eval.loss);

    if (eval.loss < best_loss - cfg.improvement_epsilon) {
      best_loss = eval.loss;
      best_fw = fw;
      stale = 0;
    } else {
      if (++stale >= cfg.patience) {
        result.iterations = iter + 1;
        break;
      }
    }

    adam_step(fw, fw_adam, eval.fw_grads);
    adam_step(bw, bw_adam, eval.bw_grads);
    result.iterations = iter + 1;
  }

  result.best_loss = best_loss;
  const Eigen::MatrixXd flow = best_fw.forward(problem.source_matrix());
  result.flow.vectors.resize(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    result.flow.vectors[i] = flow.row(static_cast<Eigen::Index>(i)).transpose();
  }
  return result;
}

FlowField compose_total_flow(const PointCloud& original,
                             const RigidTransform& t,
                             const FlowField& residual) {
  if (original.size() != residual.size()) {
    throw InvalidArgumentError("compose_total_flow: size mismatch");
  }
  FlowField total(original.size());
  for (std::size_t i = 0; i < original.size(); ++i) {
    total.vectors[i] =
        t.apply(original.points[i]) + residual.vectors[i] - original.points[i];
  }
  return total;
}

}  // namespace sceneflow
