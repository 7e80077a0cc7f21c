#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "sceneflow/types.hpp"

namespace sceneflow {

// Small fully-connected network: ReLU on hidden layers, identity output.
// Gradients are hand-derived for this fixed architecture family; there is
// no general autodiff graph. All math is double precision.
class TinyNet {
 public:
  // Per-layer activations from a forward pass; activations[0] is the input
  // batch, activations[L] the output. Hidden activations are post-ReLU.
  struct ForwardCache {
    std::vector<Eigen::MatrixXd> activations;
  };

  struct Gradients {
    std::vector<Eigen::MatrixXd> weights;  // same shapes as the parameters
    std::vector<Eigen::VectorXd> biases;
    Eigen::MatrixXd inputs;  // d(objective)/d(input batch)
  };

  // widths = {input, hidden..., output}. Parameters start at zero.
  explicit TinyNet(std::vector<int> widths);

  // Deterministic seeded initialization: hidden (ReLU) layers are He-normal
  // (std = sqrt(2 / fan_in)) with zero biases; the identity output layer
  // starts at zero, so a fresh network is the zero map.
  static TinyNet init(const std::vector<int>& widths, std::uint64_t seed);

  const std::vector<int>& widths() const { return widths_; }
  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  std::size_t layer_count() const { return weights_.size(); }

  std::vector<Eigen::MatrixXd>& weights() { return weights_; }
  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  std::vector<Eigen::VectorXd>& biases() { return biases_; }
  const std::vector<Eigen::VectorXd>& biases() const { return biases_; }

  // inputs: N x input_dim, one sample per row. Returns N x output_dim.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs,
                          ForwardCache& cache) const;

  // Reverse-mode gradients of the forward map under an upstream gradient
  // d(objective)/d(output), shaped N x output_dim.
  Gradients backward(const ForwardCache& cache,
                     const Eigen::MatrixXd& upstream) const;

  // Flat parameter view in layer order (weights row-major, then bias).
  std::size_t parameter_count() const;
  double parameter(std::size_t flat_index) const;
  void set_parameter(std::size_t flat_index, double value);
  static double gradient_entry(const Gradients& grads, std::size_t flat_index);

 private:
  std::vector<int> widths_;
  std::vector<Eigen::MatrixXd> weights_;  // layer l: widths[l+1] x widths[l]
  std::vector<Eigen::VectorXd> biases_;   // layer l: widths[l+1]
};

// Adam optimizer state, one per network being trained. No weight decay.
struct AdamState {
  double learning_rate = 0.004;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<Eigen::MatrixXd> m_weights, v_weights;
  std::vector<Eigen::VectorXd> m_biases, v_biases;

  static AdamState for_net(const TinyNet& net, double learning_rate = 0.004);
};

// Standard Adam update with bias correction: m/v moment tracking, then
// theta -= lr * m_hat / (sqrt(v_hat) + eps).
void adam_step(TinyNet& net, AdamState& state, const TinyNet::Gradients& grads);

}  // namespace sceneflow
