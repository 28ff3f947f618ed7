#include "raceam/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace raceam {

Mlp::Mlp(std::vector<int> dims, Activation hidden, Activation output)
    : dims_(std::move(dims)), hidden_(hidden), output_(output) {
  if (dims_.size() < 2) throw std::invalid_argument("mlp: need at least two dims");
  for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
    weights_.emplace_back(Eigen::MatrixXd::Zero(dims_[i + 1], dims_[i]));
    biases_.emplace_back(Eigen::VectorXd::Zero(dims_[i + 1]));
  }
}

void Mlp::init(std::mt19937_64& rng, double final_scale) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    double bound = 1.0 / std::sqrt(static_cast<double>(dims_[l]));
    double scale = (l + 1 == weights_.size()) ? final_scale : 1.0;
    for (Eigen::Index j = 0; j < weights_[l].cols(); ++j)
      for (Eigen::Index i = 0; i < weights_[l].rows(); ++i)
        weights_[l](i, j) = scale * bound * u(rng);
    for (Eigen::Index i = 0; i < biases_[l].size(); ++i)
      biases_[l](i) = scale * bound * u(rng);
  }
}

namespace {

void apply_activation(Eigen::MatrixXd& z, Activation act) {
  switch (act) {
    case Activation::kRelu:
      z = z.cwiseMax(0.0);
      break;
    case Activation::kTanh:
      z = z.array().tanh().matrix();
      break;
    case Activation::kLinear:
      break;
  }
}

// Derivative expressed through the activation's own output.
void apply_activation_grad(Eigen::MatrixXd& delta, const Eigen::MatrixXd& activated,
                           Activation act) {
  switch (act) {
    case Activation::kRelu:
      delta = (activated.array() > 0.0).select(delta, 0.0);
      break;
    case Activation::kTanh:
      delta.array() *= 1.0 - activated.array().square();
      break;
    case Activation::kLinear:
      break;
  }
}

}  // namespace

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input) const {
  Workspace ws;
  return forward(input, ws);
}

const Eigen::MatrixXd& Mlp::forward(const Eigen::MatrixXd& input, Workspace& ws) const {
  if (input.rows() != dims_.front()) {
    throw std::invalid_argument("mlp: input dimension mismatch");
  }
  ws.inputs.resize(weights_.size());
  ws.inputs[0] = input;
  Eigen::MatrixXd z;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    z.noalias() = weights_[l] * ws.inputs[l];
    z.colwise() += biases_[l];
    apply_activation(z, l + 1 == weights_.size() ? output_ : hidden_);
    if (l + 1 < weights_.size()) {
      ws.inputs[l + 1] = z;
    } else {
      ws.output = std::move(z);
    }
  }
  return ws.output;
}

Mlp::Gradients Mlp::make_gradients() const {
  Gradients g;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    g.w.emplace_back(Eigen::MatrixXd::Zero(weights_[l].rows(), weights_[l].cols()));
    g.b.emplace_back(Eigen::VectorXd::Zero(biases_[l].size()));
  }
  return g;
}

void Mlp::Gradients::setZero() {
  for (auto& m : w) m.setZero();
  for (auto& v : b) v.setZero();
}

Eigen::MatrixXd Mlp::backward(const Workspace& ws, const Eigen::MatrixXd& out_grad,
                              Gradients* grads) const {
  Eigen::MatrixXd delta = out_grad;
  for (std::size_t l = weights_.size(); l-- > 0;) {
    const Eigen::MatrixXd& activated = l + 1 == weights_.size() ? ws.output : ws.inputs[l + 1];
    apply_activation_grad(delta, activated, l + 1 == weights_.size() ? output_ : hidden_);
    if (grads) {
      grads->w[l].noalias() += delta * ws.inputs[l].transpose();
      grads->b[l].noalias() += delta.rowwise().sum();
    }
    if (l == 0) {
      return weights_[0].transpose() * delta;
    }
    delta = weights_[l].transpose() * delta;
  }
  return {};
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    n += static_cast<std::size_t>(weights_[l].size()) + biases_[l].size();
  }
  return n;
}

void soft_update(Mlp& target, const Mlp& online, double rate) {
  if (target.dims() != online.dims()) {
    throw std::invalid_argument("soft_update: shape mismatch");
  }
  for (std::size_t l = 0; l < target.layer_count(); ++l) {
    target.weights()[l] = rate * online.weights()[l] + (1.0 - rate) * target.weights()[l];
    target.biases()[l] = rate * online.biases()[l] + (1.0 - rate) * target.biases()[l];
  }
}

Adam::Adam(const Mlp& net, double lr_, double beta1_, double beta2_, double eps_)
    : lr(lr_), beta1(beta1_), beta2(beta2_), eps(eps_) {
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    m_w.emplace_back(Eigen::MatrixXd::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
    v_w.emplace_back(Eigen::MatrixXd::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
    m_b.emplace_back(Eigen::VectorXd::Zero(net.biases()[l].size()));
    v_b.emplace_back(Eigen::VectorXd::Zero(net.biases()[l].size()));
  }
}

void Adam::step(Mlp& net, const Mlp::Gradients& grads) {
  ++t;
  double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    m_w[l] = beta1 * m_w[l] + (1.0 - beta1) * grads.w[l];
    v_w[l].array() = beta2 * v_w[l].array() + (1.0 - beta2) * grads.w[l].array().square();
    net.weights()[l].array() -=
        lr * (m_w[l].array() / c1) / ((v_w[l].array() / c2).sqrt() + eps);
    m_b[l] = beta1 * m_b[l] + (1.0 - beta1) * grads.b[l];
    v_b[l].array() = beta2 * v_b[l].array() + (1.0 - beta2) * grads.b[l].array().square();
    net.biases()[l].array() -=
        lr * (m_b[l].array() / c1) / ((v_b[l].array() / c2).sqrt() + eps);
  }
}

double gaussian(std::mt19937_64& rng) {
  // Box-Muller, one value per call; the discarded sine keeps the stream
  // length independent of call parity.
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double u1 = 0.0;
  do {
    u1 = u01(rng);
  } while (u1 <= 0.0);
  double u2 = u01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace raceam
