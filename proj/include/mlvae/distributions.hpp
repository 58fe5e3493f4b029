#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mlvae/tape.hpp"

namespace mlvae {

// Variances are floored here before being inverted during fusion.
inline constexpr double kVarianceFloor = 1e-8;

// Gaussian with diagonal covariance.
struct DiagonalNormal {
  std::vector<double> mean;
  std::vector<double> variance;

  DiagonalNormal() = default;
  // Throws std::invalid_argument on a dimension mismatch or a non-positive variance.
  DiagonalNormal(std::vector<double> mean_, std::vector<double> variance_);

  static DiagonalNormal standard(std::size_t dim);

  std::size_t dim() const { return mean.size(); }
  void validate() const;

  friend bool operator==(const DiagonalNormal&, const DiagonalNormal&) = default;
};

// Normalised product of the member densities: precisions add, and the mean is
// the precision-weighted average of member means. A single member is returned
// unchanged, bit for bit.
DiagonalNormal product_of_normals(std::span<const DiagonalNormal> members);

// mean + sqrt(variance) * noise
std::vector<double> reparameterized_sample(const DiagonalNormal& dist, std::span<const double> noise);

// KL(dist || N(0, I)) = sum 0.5 (mu^2 + s^2 - 1 - ln s^2)
double kl_to_standard_normal(const DiagonalNormal& dist);

double log_density(const DiagonalNormal& dist, std::span<const double> x);

// Tape counterparts. Batches are rank-2 with one distribution per row.
namespace dist {

Var reparameterize(Var mean, Var variance, Var noise);
Var reparameterize_log_variance(Var mean, Var log_variance, Var noise);

// Per-row KL to the standard normal, shape [rows, 1].
Var kl_to_standard_normal_rows(Var mean, Var log_variance);

struct FusedNormal {
  Var mean;          // [segments, d]
  Var log_variance;  // [segments, d]
};

// Product of normals over consecutive row segments [offsets[g], offsets[g+1]).
FusedNormal fuse_segments(Var mean, Var log_variance, std::span<const std::size_t> offsets);

}  // namespace dist

}  // namespace mlvae
