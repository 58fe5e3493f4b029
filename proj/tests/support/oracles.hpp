#pragma once

// Independent numerical oracles shared by the unit and acceptance suites.
// None of these call into the implementation they are used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "mlvae/rng.hpp"

namespace oracle {

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
  double mass = 0.0;
};

inline double normal_log_pdf(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + d * d / variance);
}

// Composite Simpson over [lo, hi] with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double lo, double hi, int panels) {
  if (panels % 2) ++panels;
  const double h = (hi - lo) / panels;
  double acc = f(lo) + f(hi);
  for (int i = 1; i < panels; ++i) acc += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

// Mean and variance of the normalised pointwise product of 1-D normal
// densities, by locating the peak of the log-product numerically and then
// integrating on a fine grid around it.
inline Moments product_moments_by_quadrature(const std::vector<double>& means, const std::vector<double>& variances) {
  auto log_product = [&](double x) {
    double s = 0.0;
    for (std::size_t i = 0; i < means.size(); ++i) s += normal_log_pdf(x, means[i], variances[i]);
    return s;
  };
  double lo = *std::min_element(means.begin(), means.end());
  double hi = *std::max_element(means.begin(), means.end());
  double widest = std::sqrt(*std::max_element(variances.begin(), variances.end()));
  lo -= 10.0 * widest;
  hi += 10.0 * widest;
  // Golden-section search for the maximum (log-product is concave).
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  for (int it = 0; it < 300; ++it) {
    const double c = b - phi * (b - a);
    const double d = a + phi * (b - a);
    if (log_product(c) > log_product(d)) b = d; else a = c;
  }
  const double peak = 0.5 * (a + b);
  const double top = log_product(peak);
  // Bisect for the points where the log-product has fallen by 60 nats.
  auto edge = [&](double direction) {
    double inner = peak, outer = peak + direction * (hi - lo + 1.0);
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (inner + outer);
      if (top - log_product(mid) < 60.0) inner = mid; else outer = mid;
    }
    return outer;
  };
  const double left = edge(-1.0), right = edge(1.0);
  auto density = [&](double x) { return std::exp(log_product(x) - top); };
  const int panels = 20000;
  Moments m;
  m.mass = simpson(density, left, right, panels);
  m.mean = simpson([&](double x) { return x * density(x); }, left, right, panels) / m.mass;
  m.variance = simpson([&](double x) { const double d = x - m.mean; return d * d * density(x); }, left, right, panels) / m.mass;
  return m;
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

// Monte-Carlo KL(q || N(0, I)) = E_q[ln q(x) - ln p(x)] for diagonal q.
inline MonteCarloEstimate kl_to_standard_by_sampling(const std::vector<double>& means, const std::vector<double>& variances,
                                                     std::size_t samples, mlvae::CounterRng& rng) {
  double s = 0.0, s2 = 0.0;
  for (std::size_t n = 0; n < samples; ++n) {
    double log_ratio = 0.0;
    for (std::size_t j = 0; j < means.size(); ++j) {
      const double x = means[j] + std::sqrt(variances[j]) * rng.normal();
      log_ratio += normal_log_pdf(x, means[j], variances[j]) - normal_log_pdf(x, 0.0, 1.0);
    }
    s += log_ratio;
    s2 += log_ratio * log_ratio;
  }
  const double n = static_cast<double>(samples);
  MonteCarloEstimate est;
  est.mean = s / n;
  est.standard_error = std::sqrt(std::max(0.0, s2 / n - est.mean * est.mean) / n);
  return est;
}

}  // namespace oracle
