#include "mlvae/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mlvae {
namespace {

double evaluate(const Objective& objective, std::span<const Tensor> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.constant(p));
  const Var out = objective(tape, vars);
  const double value = out.value().item();
  if (!std::isfinite(value)) throw NonFiniteError("finite-difference probe produced a non-finite objective");
  return value;
}

}  // namespace

double evaluate_with_gradient(const Objective& objective, std::span<const Tensor> params,
                              std::vector<Tensor>& gradients) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.variable(p));
  const Var out = objective(tape, vars);
  tape.backward(out);
  gradients.clear();
  for (const auto& v : vars) gradients.push_back(tape.gradient(v));
  return out.value().item();
}

GradCheckReport compare_to_finite_differences(const Objective& objective, std::span<const Tensor> params,
                                              std::span<const Tensor> analytic, double tolerance,
                                              std::span<const std::string> names, GradCheckOptions options) {
  if (analytic.size() != params.size()) throw ShapeError("gradcheck: gradient count does not match parameters");
  GradCheckReport report;
  report.tolerance = tolerance;
  std::vector<Tensor> probe(params.begin(), params.end());
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (analytic[k].shape() != params[k].shape()) throw ShapeError("gradcheck: gradient shape mismatch");
    GradCheckEntry entry;
    entry.name = k < names.size() ? names[k] : "param" + std::to_string(k);
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double original = probe[k][i];
      probe[k][i] = original + options.step;
      const double up = evaluate(objective, probe);
      probe[k][i] = original - options.step;
      const double down = evaluate(objective, probe);
      probe[k][i] = original;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.scale_floor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel >= entry.max_relative_error) {
        entry.max_relative_error = rel;
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    report.max_relative_error = std::max(report.max_relative_error, entry.max_relative_error);
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

GradCheckReport finite_difference_check(const Objective& objective, std::span<const Tensor> params,
                                        double tolerance, std::span<const std::string> names,
                                        GradCheckOptions options) {
  std::vector<Tensor> analytic;
  evaluate_with_gradient(objective, params, analytic);
  return compare_to_finite_differences(objective, params, analytic, tolerance, names, options);
}

}  // namespace mlvae
