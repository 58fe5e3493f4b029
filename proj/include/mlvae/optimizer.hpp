#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mlvae/tensor.hpp"

namespace mlvae {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  // Throws std::invalid_argument unless lr, epsilon > 0 and betas in [0, 1).
  void validate() const;
};

struct OptimizerState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  static OptimizerState zeros_like(std::span<const Tensor> params);
};

// One bias-corrected adaptive-moment descent step, in place:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
// To maximise an objective, pass its negated gradient.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, OptimizerState& state,
               const AdamConfig& config);

}  // namespace mlvae
