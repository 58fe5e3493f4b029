#include <gtest/gtest.h>

#include <cmath>

#include "../support/linear_gaussian.hpp"
#include "../support/oracles.hpp"
#include "mlvae/gradcheck.hpp"
#include "mlvae/model.hpp"
#include "mlvae/ops.hpp"

using namespace mlvae;

namespace {

Architecture toy_arch(std::size_t input = 16, std::size_t hidden = 5, std::size_t latent = 2) {
  Architecture a;
  a.input_dim = input;
  a.hidden = hidden;
  a.d_style = latent;
  a.d_content = latent;
  a.activation = Activation::tanh;
  return a;
}

Tensor random_pixels(std::size_t rows, std::size_t cols, CounterRng& rng) {
  Tensor t({rows, cols});
  for (double& v : t.values()) v = rng.uniform();
  return t;
}

Tensor rows_of(const Tensor& t, std::vector<std::size_t> idx) {
  Tensor out({idx.size(), t.cols()});
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) out.at(r, c) = t.at(idx[r], c);
  return out;
}

}  // namespace

TEST(ModelParams, LayoutShapesAndInitialisation) {
  Architecture arch;
  arch.input_dim = 784;
  CounterRng rng(1);
  const auto params = ModelParams::initialize(arch, rng);
  EXPECT_EQ(params.at("encoder.hidden.weight").shape(), (Shape{784, 512}));
  EXPECT_EQ(params.at("encoder.style.weight").shape(), (Shape{512, 32}));
  EXPECT_EQ(params.at("encoder.content.bias").shape(), (Shape{32}));
  EXPECT_EQ(params.at("decoder.hidden.weight").shape(), (Shape{32, 512}));
  const double limit = std::sqrt(6.0 / (784.0 + 512.0));
  for (double v : params.at("encoder.hidden.weight").values()) EXPECT_LE(std::abs(v), limit);
  for (double v : params.at("decoder.output.bias").values()) EXPECT_EQ(v, 0.0);
}

TEST(Encode, HandComputedToyNetwork) {
  // input 2 -> hidden 2 (relu) -> heads with d = 1.
  Architecture arch;
  arch.input_dim = 2;
  arch.hidden = 2;
  arch.d_style = 1;
  arch.d_content = 1;
  CounterRng rng(0);
  auto params = ModelParams::initialize(arch, rng);
  params.at("encoder.hidden.bias") = Tensor::vector({0.5, -0.25});
  params.at("encoder.style.weight") = Tensor::matrix(2, 2, {1.0, 2.0, 3.0, 4.0});
  params.at("encoder.style.bias") = Tensor::vector({0.1, -0.2});
  params.at("encoder.content.weight") = Tensor::matrix(2, 2, {-1.0, 0.5, 2.0, 1.0});
  params.at("encoder.content.bias") = Tensor::vector({0.0, 0.3});
  const auto enc = encode(std::vector<double>{0.0, 0.0}, params);
  // x = 0 -> hidden = relu([0.5, -0.25]) = [0.5, 0].
  EXPECT_DOUBLE_EQ(enc.style.mean[0], 0.5 * 1.0 + 0.1);
  EXPECT_DOUBLE_EQ(enc.style.variance[0], std::exp(0.5 * 2.0 - 0.2));
  EXPECT_DOUBLE_EQ(enc.content.mean[0], 0.5 * -1.0);
  EXPECT_DOUBLE_EQ(enc.content.variance[0], std::exp(0.5 * 0.5 + 0.3));
}

TEST(Encode, PositiveVariancesDeterminismAndErrors) {
  CounterRng rng(2);
  const auto params = ModelParams::initialize(toy_arch(), rng);
  const Tensor x = random_pixels(1, 16, rng);
  const auto a = encode(x.values(), params);
  const auto b = encode(x.values(), params);
  EXPECT_EQ(a.style, b.style);
  EXPECT_EQ(a.content, b.content);
  for (double v : a.style.variance) EXPECT_GT(v, 0.0);
  for (double v : a.content.variance) EXPECT_GT(v, 0.0);
  EXPECT_THROW(encode(std::vector<double>(15, 0.5), params), ShapeError);
  EXPECT_THROW(encode(std::vector<double>(16, 1.5), params), std::invalid_argument);
}

TEST(GroupContentPosterior, SingletonDuplicateAndQuadrature) {
  const DiagonalNormal q({0.4, -1.0}, {0.7, 2.0});
  EXPECT_EQ(group_content_posterior(std::vector<DiagonalNormal>{q}), q);
  const auto doubled = group_content_posterior(std::vector<DiagonalNormal>{q, q});
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_NEAR(doubled.mean[j], q.mean[j], 1e-15);
    EXPECT_NEAR(doubled.variance[j], q.variance[j] / 2.0, 1e-15);
  }

  CounterRng rng(12);
  std::vector<DiagonalNormal> members;
  for (int i = 0; i < 10; ++i) {
    members.emplace_back(std::vector<double>{rng.normal(), rng.normal()},
                         std::vector<double>{0.2 + rng.uniform(), 0.2 + 2.0 * rng.uniform()});
  }
  const auto fused = group_content_posterior(members);
  for (std::size_t j = 0; j < 2; ++j) {
    std::vector<double> m, v;
    for (const auto& d : members) {
      m.push_back(d.mean[j]);
      v.push_back(d.variance[j]);
    }
    const auto oracle_moments = oracle::product_moments_by_quadrature(m, v);
    EXPECT_NEAR(fused.mean[j], oracle_moments.mean, 1e-6);
    EXPECT_NEAR(fused.variance[j], oracle_moments.variance, 1e-6);
  }
}

TEST(Decode, RangeDeterminismAndErrors) {
  CounterRng rng(3);
  const auto params = ModelParams::initialize(toy_arch(), rng);
  const std::vector<double> c = {10.0, -20.0}, s = {30.0, 5.0};
  const auto out = decode(c, s, params);
  ASSERT_EQ(out.size(), 16u);
  for (double p : out) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
  EXPECT_EQ(out, decode(c, s, params));
  EXPECT_THROW(decode(std::vector<double>{1.0}, s, params), ShapeError);
}

TEST(Decode, ReconstructionGradientInLatentsPassesFiniteDifferences) {
  CounterRng rng(4);
  const auto params = ModelParams::initialize(toy_arch(), rng);
  const Tensor x = random_pixels(3, 16, rng);
  Objective objective = [&](Tape& tape, std::span<const Var> p) {
    BoundModel model(tape, params, false);
    return ops::sum(model.log_likelihood_rows(tape.constant(x), model.decode_raw(p[0], p[1])));
  };
  const std::vector<Tensor> latents = {rng.normal_tensor({3, 2}), rng.normal_tensor({3, 2})};
  const auto report = finite_difference_check(objective, latents, 1e-4);
  EXPECT_TRUE(report.passed) << report.max_relative_error;
}

TEST(GroupElbo, DegeneratePriorEncodersAndHalfDecoder) {
  Architecture arch = toy_arch(16, 4, 2);
  arch.activation = Activation::relu;
  CounterRng rng(5);
  auto params = ModelParams::initialize(arch, rng);
  for (auto& p : params.parameters()) p.value = Tensor::zeros_like(p.value);
  Tensor x({1, 16});
  for (std::size_t i = 0; i < 16; ++i) x[i] = static_cast<double>(i % 2);
  const auto elbo = group_elbo(x, params, rng);
  EXPECT_NEAR(elbo.total, 16.0 * std::log(0.5), 1e-12);
  EXPECT_DOUBLE_EQ(elbo.style_kl, 0.0);
  EXPECT_DOUBLE_EQ(elbo.content_kl, 0.0);
}

TEST(GroupElbo, ContentKlCountedOncePerGroup) {
  CounterRng rng(6);
  const auto params = ModelParams::initialize(toy_arch(), rng);
  const Tensor pair = random_pixels(2, 16, rng);
  const Tensor with_duplicate = rows_of(pair, {0, 1, 1});
  CounterRng n1(1), n2(1);
  const auto a = group_elbo(pair, params, n1);
  const auto b = group_elbo(with_duplicate, params, n2);
  EXPECT_NE(a.style_kl, b.style_kl);
  EXPECT_NE(a.reconstruction, b.reconstruction);

  // Content KL is exactly the KL of the fused posterior, whatever the group size.
  for (const Tensor* g : {&pair, &with_duplicate}) {
    const auto enc = encode_batch(*g, params);
    std::vector<DiagonalNormal> contributions;
    for (std::size_t r = 0; r < g->rows(); ++r) contributions.push_back(enc.content_row(r));
    CounterRng n(9);
    const auto elbo = group_elbo(*g, params, n);
    EXPECT_NEAR(elbo.content_kl, kl_to_standard_normal(group_content_posterior(contributions)), 1e-10);
    EXPECT_NEAR(elbo.total, elbo.reconstruction - elbo.style_kl - elbo.content_kl, 1e-12);
    EXPECT_GE(elbo.style_kl, 0.0);
    EXPECT_GE(elbo.content_kl, 0.0);
  }
}

TEST(GroupElbo, PermutingMembersWithTheirNoiseLeavesTotalInvariant) {
  CounterRng rng(7);
  const auto params = ModelParams::initialize(toy_arch(), rng);
  const Tensor group = random_pixels(4, 16, rng);
  const auto noise = ElboNoise::draw(4, params.architecture(), rng);
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  ElboNoise permuted{rows_of(noise.content, perm), rows_of(noise.style, perm)};
  const auto a = group_elbo(group, params, noise);
  const auto b = group_elbo(rows_of(group, perm), params, permuted);
  EXPECT_NEAR(a.total, b.total, 1e-10);
  EXPECT_NEAR(a.content_kl, b.content_kl, 1e-12);
  EXPECT_NEAR(a.style_kl, b.style_kl, 1e-12);
}

TEST(GroupElbo, FiniteOnExtremePixelsAndEmptyGroupRejected) {
  CounterRng rng(8);
  const auto params = ModelParams::initialize(toy_arch(), rng);
  Tensor group({3, 16});
  for (std::size_t i = 0; i < group.size(); ++i) group[i] = (i % 3 == 0) ? 0.0 : 1.0;
  const auto e = group_elbo(group, params, rng);
  EXPECT_TRUE(std::isfinite(e.total));
  EXPECT_THROW(group_elbo(Tensor{}, params, rng), std::invalid_argument);
}

TEST(GroupElbo, EndToEndGradientPassesFiniteDifferences) {
  CounterRng rng(9);
  const Architecture arch = toy_arch(16, 4, 2);
  const auto params = ModelParams::initialize(arch, rng);
  const Tensor group = random_pixels(3, 16, rng);
  const auto noise = ElboNoise::draw(3, arch, rng);
  const Tensor groups[1] = {group};
  const auto batch = GroupBatch::from_groups(groups);
  Objective objective = [&](Tape& tape, std::span<const Var> p) {
    BoundModel model(tape, arch, p);
    return ops::sum(group_elbo_terms(model, batch, noise).total);
  };
  const auto values = params.values();
  const auto names = params.names();
  const auto report = finite_difference_check(objective, values, 1e-4, names);
  EXPECT_TRUE(report.passed) << report.max_relative_error;
}

TEST(GroupElbo, LinearGaussianBoundAndGap) {
  Architecture arch;
  arch.input_dim = 3;
  arch.hidden = 0;
  arch.d_style = 1;
  arch.d_content = 1;
  arch.likelihood = Likelihood::gaussian;
  arch.observation_variance = 0.5;
  CounterRng rng(10);
  for (int setting = 0; setting < 10; ++setting) {
    auto params = ModelParams::initialize(arch, rng);
    for (auto& p : params.parameters())
      for (double& v : p.value.values()) v = 0.8 * rng.normal();
    const Tensor group = rng.normal_tensor({3, 3});
    const auto truth = oracle::linear_gaussian_truth(params, group);
    const int draws = 4000;
    double s = 0.0, s2 = 0.0;
    for (int d = 0; d < draws; ++d) {
      const double t = group_elbo(group, params, rng).total;
      s += t;
      s2 += t * t;
    }
    const double mean = s / draws;
    const double se = std::sqrt((s2 / draws - mean * mean) / draws);
    EXPECT_GE(truth.posterior_kl, 0.0);
    EXPECT_LE(mean, truth.log_evidence + 3.0 * se);
    EXPECT_NEAR(mean, truth.exact_elbo(), 4.0 * se + 1e-9);
  }
}
