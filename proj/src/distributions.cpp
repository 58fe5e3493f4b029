#include "mlvae/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "mlvae/ops.hpp"

namespace mlvae {

DiagonalNormal::DiagonalNormal(std::vector<double> mean_, std::vector<double> variance_)
    : mean(std::move(mean_)), variance(std::move(variance_)) {
  validate();
}

DiagonalNormal DiagonalNormal::standard(std::size_t dim) {
  return DiagonalNormal(std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0));
}

void DiagonalNormal::validate() const {
  if (mean.size() != variance.size()) {
    throw std::invalid_argument("DiagonalNormal: mean has dimension " + std::to_string(mean.size()) +
                                " but variance has " + std::to_string(variance.size()));
  }
  for (std::size_t i = 0; i < variance.size(); ++i) {
    if (!(variance[i] > 0.0) || !std::isfinite(variance[i])) {
      throw std::invalid_argument("DiagonalNormal: variance must be positive and finite, got " +
                                  std::to_string(variance[i]) + " at coordinate " + std::to_string(i));
    }
    if (!std::isfinite(mean[i])) throw std::invalid_argument("DiagonalNormal: non-finite mean");
  }
}

DiagonalNormal product_of_normals(std::span<const DiagonalNormal> members) {
  if (members.empty()) throw std::invalid_argument("product_of_normals: empty member list");
  const std::size_t d = members.front().dim();
  for (const auto& m : members) {
    m.validate();
    if (m.dim() != d) throw std::invalid_argument("product_of_normals: members differ in dimension");
  }
  if (members.size() == 1) return members.front();

  std::vector<double> precision(d, 0.0);
  std::vector<double> weighted_mean(d, 0.0);
  for (const auto& m : members) {
    for (std::size_t j = 0; j < d; ++j) {
      const double p = 1.0 / std::max(m.variance[j], kVarianceFloor);
      precision[j] += p;
      weighted_mean[j] += m.mean[j] * p;
    }
  }
  DiagonalNormal out;
  out.mean.resize(d);
  out.variance.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    out.variance[j] = 1.0 / precision[j];
    out.mean[j] = weighted_mean[j] / precision[j];
  }
  return out;
}

std::vector<double> reparameterized_sample(const DiagonalNormal& dist, std::span<const double> noise) {
  dist.validate();
  if (noise.size() != dist.dim()) throw std::invalid_argument("reparameterized_sample: noise dimension mismatch");
  std::vector<double> out(dist.dim());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = dist.mean[j] + std::sqrt(dist.variance[j]) * noise[j];
  return out;
}

double kl_to_standard_normal(const DiagonalNormal& dist) {
  dist.validate();
  double kl = 0.0;
  for (std::size_t j = 0; j < dist.dim(); ++j) {
    const double m = dist.mean[j];
    const double v = dist.variance[j];
    kl += 0.5 * (m * m + v - 1.0 - std::log(v));
  }
  return kl;
}

double log_density(const DiagonalNormal& dist, std::span<const double> x) {
  dist.validate();
  if (x.size() != dist.dim()) throw std::invalid_argument("log_density: dimension mismatch");
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  double lp = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double diff = x[j] - dist.mean[j];
    lp += -0.5 * (log_two_pi + std::log(dist.variance[j]) + diff * diff / dist.variance[j]);
  }
  return lp;
}

namespace dist {

Var reparameterize(Var mean, Var variance, Var noise) {
  return mean + ops::exp(0.5 * ops::log(variance)) * noise;
}

Var reparameterize_log_variance(Var mean, Var log_variance, Var noise) {
  return mean + ops::exp(0.5 * log_variance) * noise;
}

Var kl_to_standard_normal_rows(Var mean, Var log_variance) {
  // 0.5 * (mu^2 + exp(lv) - 1 - lv)
  Var terms = mean * mean + ops::exp(log_variance) - log_variance;
  return 0.5 * (ops::sum_cols(terms) - static_cast<double>(mean.value().cols()));
}

FusedNormal fuse_segments(Var mean, Var log_variance, std::span<const std::size_t> offsets) {
  const double log_floor = std::log(kVarianceFloor);
  Var precision = ops::exp(-ops::clamp_min(log_variance, log_floor));
  Var total_precision = ops::segment_sum_rows(precision, offsets);
  Var weighted = ops::segment_sum_rows(mean * precision, offsets);
  Var fused_log_variance = -ops::log(total_precision);
  Var fused_mean = weighted * ops::exp(fused_log_variance);
  return {fused_mean, fused_log_variance};
}

}  // namespace dist

}  // namespace mlvae
