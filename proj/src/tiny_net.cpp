#include "sceneflow/tiny_net.hpp"

#include <cmath>

#include "sceneflow/errors.hpp"
#include "sceneflow/rng.hpp"

namespace sceneflow {

TinyNet::TinyNet(std::vector<int> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 2) {
    throw InvalidArgumentError("TinyNet: need at least input and output widths");
  }
  for (int w : widths_) {
    if (w < 1) throw InvalidArgumentError("TinyNet: widths must be >= 1");
  }
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    weights_.emplace_back(Eigen::MatrixXd::Zero(widths_[l + 1], widths_[l]));
    biases_.emplace_back(Eigen::VectorXd::Zero(widths_[l + 1]));
  }
}

TinyNet TinyNet::init(const std::vector<int>& widths, std::uint64_t seed) {
  TinyNet net(widths);
  Rng rng(seed);
  const std::size_t last = net.weights_.size() - 1;
  for (std::size_t l = 0; l < last; ++l) {
    const double std_dev = std::sqrt(2.0 / net.widths_[l]);
    auto& w = net.weights_[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        w(r, c) = rng.normal(0.0, std_dev);
      }
    }
  }
  return net;
}

Eigen::MatrixXd TinyNet::forward(const Eigen::MatrixXd& inputs) const {
  ForwardCache cache;
  return forward(inputs, cache);
}

Eigen::MatrixXd TinyNet::forward(const Eigen::MatrixXd& inputs,
                                 ForwardCache& cache) const {
  if (inputs.cols() != input_dim()) {
    throw InvalidArgumentError("TinyNet::forward: input dimension mismatch (" +
                               std::to_string(inputs.cols()) + " vs " +
                               std::to_string(input_dim()) + ")");
  }
  cache.activations.clear();
  cache.activations.reserve(weights_.size() + 1);
  cache.activations.push_back(inputs);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::MatrixXd z = cache.activations.back() * weights_[l].transpose();
    z.rowwise() += biases_[l].transpose();
    if (l + 1 < weights_.size()) z = z.cwiseMax(0.0);  // hidden ReLU
    cache.activations.push_back(std::move(z));
  }
  return cache.activations.back();
}

TinyNet::Gradients TinyNet::backward(const ForwardCache& cache,
                                     const Eigen::MatrixXd& upstream) const {
  if (cache.activations.size() != weights_.size() + 1) {
    throw InvalidArgumentError("TinyNet::backward: cache does not match net");
  }
  if (upstream.rows() != cache.activations.back().rows() ||
      upstream.cols() != output_dim()) {
    throw InvalidArgumentError("TinyNet::backward: upstream shape mismatch");
  }

  Gradients grads;
  grads.weights.resize(weights_.size());
  grads.biases.resize(weights_.size());

  // delta = d(objective)/d(pre-activation of layer l). The output layer is
  // linear so its delta is the upstream gradient itself.
  Eigen::MatrixXd delta = upstream;
  for (std::size_t l = weights_.size(); l-- > 0;) {
    grads.weights[l].noalias() = delta.transpose() * cache.activations[l];
    grads.biases[l] = delta.colwise().sum().transpose();
    Eigen::MatrixXd prev = delta * weights_[l];
    if (l > 0) {
      // ReLU mask: post-activation > 0 iff pre-activation > 0.
      prev.array() *= (cache.activations[l].array() > 0.0).cast<double>();
    }
    delta = std::move(prev);
  }
  grads.inputs = std::move(delta);
  return grads;
}

std::size_t TinyNet::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    n += static_cast<std::size_t>(weights_[l].size()) +
         static_cast<std::size_t>(biases_[l].size());
  }
  return n;
}

namespace {

// Locates flat index i inside (layer, in-weights?, offset).
struct FlatLoc {
  std::size_t layer;
  bool in_weights;
  Eigen::Index row;
  Eigen::Index col;  // bias entries use row only
};

FlatLoc locate(const std::vector<Eigen::MatrixXd>& weights,
               const std::vector<Eigen::VectorXd>& biases, std::size_t flat) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const auto wsize = static_cast<std::size_t>(weights[l].size());
    if (flat < wsize) {
      const auto cols = static_cast<std::size_t>(weights[l].cols());
      return {l, true, static_cast<Eigen::Index>(flat / cols),
              static_cast<Eigen::Index>(flat % cols)};
    }
    flat -= wsize;
    const auto bsize = static_cast<std::size_t>(biases[l].size());
    if (flat < bsize) {
      return {l, false, static_cast<Eigen::Index>(flat), 0};
    }
    flat -= bsize;
  }
  throw InvalidArgumentError("TinyNet: flat parameter index out of range");
}

}  // namespace

double TinyNet::parameter(std::size_t flat_index) const {
  const FlatLoc loc = locate(weights_, biases_, flat_index);
  return loc.in_weights ? weights_[loc.layer](loc.row, loc.col)
                        : biases_[loc.layer](loc.row);
}

void TinyNet::set_parameter(std::size_t flat_index, double value) {
  const FlatLoc loc = locate(weights_, biases_, flat_index);
  if (loc.in_weights) {
    weights_[loc.layer](loc.row, loc.col) = value;
  } else {
    biases_[loc.layer](loc.row) = value;
  }
}

double TinyNet::gradient_entry(const Gradients& grads, std::size_t flat_index) {
  const FlatLoc loc = locate(grads.weights, grads.biases, flat_index);
  return loc.in_weights ? grads.weights[loc.layer](loc.row, loc.col)
                        : grads.biases[loc.layer](loc.row);
}

AdamState AdamState::for_net(const TinyNet& net, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    s.m_weights.push_back(Eigen::MatrixXd::Zero(net.weights()[l].rows(),
                                                net.weights()[l].cols()));
    s.v_weights.push_back(Eigen::MatrixXd::Zero(net.weights()[l].rows(),
                                                net.weights()[l].cols()));
    s.m_biases.push_back(Eigen::VectorXd::Zero(net.biases()[l].size()));
    s.v_biases.push_back(Eigen::VectorXd::Zero(net.biases()[l].size()));
  }
  return s;
}

void adam_step(TinyNet& net, AdamState& state,
               const TinyNet::Gradients& grads) {
  if (state.m_weights.size() != net.layer_count()) {
    throw InvalidArgumentError("adam_step: state does not match net");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, state.step);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step);
  const double lr = state.learning_rate;

  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
      m = state.beta1 * m + (1.0 - state.beta1) * g;
      v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
      param.array() -=
          lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.epsilon);
    };
    update(net.weights()[l], state.m_weights[l], state.v_weights[l],
           grads.weights[l]);
    update(net.biases()[l], state.m_biases[l], state.v_biases[l],
           grads.biases[l]);
  }
}

}  // namespace sceneflow
