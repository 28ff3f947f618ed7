#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <vector>

namespace raceam {

/// Minimal fully connected network with hand-written backprop.
/// Batches are column-major: one sample per column.

enum class Activation { kRelu, kTanh, kLinear };

class Mlp {
 public:
  Mlp() = default;
  /// dims = {input, hidden..., output}.
  Mlp(std::vector<int> dims, Activation hidden, Activation output);

  /// Uniform fan-in init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)); the last
  /// layer's weights and biases are scaled by `final_scale`.
  void init(std::mt19937_64& rng, double final_scale = 1.0);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& input) const;

  struct Workspace {
    std::vector<Eigen::MatrixXd> inputs;  // input to each layer
    Eigen::MatrixXd output;
  };
  const Eigen::MatrixXd& forward(const Eigen::MatrixXd& input, Workspace& ws) const;

  struct Gradients {
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;
    void setZero();
  };
  Gradients make_gradients() const;

  /// Backprop from dL/d(output). Accumulates parameter gradients into
  /// `grads` (if non-null) and returns dL/d(input).
  Eigen::MatrixXd backward(const Workspace& ws, const Eigen::MatrixXd& out_grad,
                           Gradients* grads) const;

  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  std::size_t layer_count() const { return weights_.size(); }
  const std::vector<int>& dims() const { return dims_; }
  std::vector<Eigen::MatrixXd>& weights() { return weights_; }
  std::vector<Eigen::VectorXd>& biases() { return biases_; }
  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& biases() const { return biases_; }
  std::size_t parameter_count() const;

 private:
  std::vector<int> dims_;
  Activation hidden_ = Activation::kRelu;
  Activation output_ = Activation::kLinear;
  std::vector<Eigen::MatrixXd> weights_;  // [out x in]
  std::vector<Eigen::VectorXd> biases_;
};

/// target <- rate * online + (1 - rate) * target. Shapes must match.
void soft_update(Mlp& target, const Mlp& online, double rate);

/// Adaptive-moment gradient descent over one Mlp's parameters.
class Adam {
 public:
  Adam() = default;
  explicit Adam(const Mlp& net, double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(Mlp& net, const Mlp::Gradients& grads);

  double lr = 0.0, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::int64_t t = 0;
  std::vector<Eigen::MatrixXd> m_w, v_w;
  std::vector<Eigen::VectorXd> m_b, v_b;
};

/// Standard normal draw via Box-Muller; stateless apart from the RNG, so
/// checkpointed RNG streams replay exactly.
double gaussian(std::mt19937_64& rng);

}  // namespace raceam
