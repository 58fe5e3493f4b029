#include "mlvae/optimizer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mlvae {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
  if (!(epsilon > 0.0)) throw std::invalid_argument("adam: epsilon must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("adam: beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("adam: beta2 must lie in [0, 1)");
}

OptimizerState OptimizerState::zeros_like(std::span<const Tensor> params) {
  OptimizerState state;
  for (const auto& p : params) {
    state.first_moment.push_back(Tensor::zeros_like(p));
    state.second_moment.push_back(Tensor::zeros_like(p));
  }
  return state;
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, OptimizerState& state,
               const AdamConfig& config) {
  config.validate();
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam: parameter, gradient and moment counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].shape() != params[k].shape() || state.first_moment[k].shape() != params[k].shape() ||
        state.second_moment[k].shape() != params[k].shape()) {
      throw ShapeError("adam: shape mismatch for parameter " + std::to_string(k) + " " +
                       shape_to_string(params[k].shape()));
    }
    grads[k].require_finite("adam gradient " + std::to_string(k));
  }

  const auto t = static_cast<double>(state.step + 1);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].values();
    auto g = grads[k].values();
    auto m = state.first_moment[k].values();
    auto v = state.second_moment[k].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
  ++state.step;
}

}  // namespace mlvae
