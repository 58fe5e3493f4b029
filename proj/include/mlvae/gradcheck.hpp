#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mlvae/tape.hpp"

namespace mlvae {

// Builds a one-element objective on `tape` from variables bound to the
// supplied parameter values. Must be a pure function of those values.
using Objective = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckEntry {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradCheckOptions {
  double step = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, scale_floor); the floor keeps
  // near-zero gradients from reporting round-off as relative error.
  double scale_floor = 1e-3;
};

// Evaluates the objective and its reverse-mode gradient at `params`.
double evaluate_with_gradient(const Objective& objective, std::span<const Tensor> params,
                              std::vector<Tensor>& gradients);

// Compares caller-supplied gradients against central differences.
GradCheckReport compare_to_finite_differences(const Objective& objective, std::span<const Tensor> params,
                                              std::span<const Tensor> analytic, double tolerance,
                                              std::span<const std::string> names = {},
                                              GradCheckOptions options = {});

GradCheckReport finite_difference_check(const Objective& objective, std::span<const Tensor> params,
                                        double tolerance, std::span<const std::string> names = {},
                                        GradCheckOptions options = {});

}  // namespace mlvae
