#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mlvae/distributions.hpp"
#include "mlvae/rng.hpp"
#include "mlvae/tape.hpp"

namespace mlvae {

enum class Activation { relu, tanh };
enum class Likelihood { bernoulli, gaussian };

std::string to_string(Activation a);
std::string to_string(Likelihood l);
Activation activation_from_string(const std::string& s);
Likelihood likelihood_from_string(const std::string& s);

// Layer widths and output model. hidden == 0 makes both encoder and decoder
// single affine maps; d_style == 0 drops the style factor, which turns the
// network into a plain single-latent VAE when trained on singleton groups.
struct Architecture {
  std::size_t input_dim = 0;
  std::size_t hidden = 512;
  std::size_t d_style = 16;
  std::size_t d_content = 16;
  Activation activation = Activation::relu;
  Likelihood likelihood = Likelihood::bernoulli;
  // Fixed per-pixel variance of the Gaussian likelihood.
  double observation_variance = 1.0;

  void validate() const;
  std::size_t latent_dim() const { return d_style + d_content; }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct Parameter {
  std::string name;
  Tensor value;

  friend bool operator==(const Parameter&, const Parameter&) = default;
};

// Encoder (trunk + style head + content head) and decoder parameters.
// Head outputs are [mean | log-variance], 2*d columns.
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(Architecture arch, std::vector<Parameter> params);

  // Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases.
  static ModelParams initialize(const Architecture& arch, CounterRng& rng);
  static std::vector<std::pair<std::string, Shape>> layout(const Architecture& arch);

  const Architecture& architecture() const { return arch_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::size_t size() const { return params_.size(); }

  std::vector<Tensor> values() const;
  std::vector<std::string> names() const;
  void set_values(std::span<const Tensor> values);
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  Architecture arch_;
  std::vector<Parameter> params_;
};

// Per-row factors of a batch of observations. Style members are unbound when
// the architecture has no style factor.
struct EncodedVars {
  Var style_mean;
  Var style_log_variance;
  Var content_mean;
  Var content_log_variance;
};

// Model parameters bound to a tape as variables (trainable) or constants.
class BoundModel {
 public:
  BoundModel(Tape& tape, const ModelParams& params, bool trainable);
  // Binds caller-owned Vars in ModelParams::layout order.
  BoundModel(Tape& tape, const Architecture& arch, std::span<const Var> vars);

  EncodedVars encode(Var observations) const;
  // Decoder output before the likelihood link: logits (Bernoulli) or means (Gaussian).
  Var decode_raw(Var content, Var style) const;
  // Per-row log p(x | decoder output), shape [rows, 1].
  Var log_likelihood_rows(Var observations, Var decoded_raw) const;

  std::span<const Var> vars() const { return vars_; }
  const Architecture& architecture() const { return arch_; }
  Tape& tape() const { return *tape_; }

 private:
  Var param(std::size_t index) const { return vars_[index]; }

  Tape* tape_;
  Architecture arch_;
  std::vector<Var> vars_;
};

// Observations of one or more groups stacked row-wise; group g occupies rows
// [offsets[g], offsets[g+1]).
struct GroupBatch {
  Tensor observations;
  std::vector<std::size_t> offsets;

  static GroupBatch from_groups(std::span<const Tensor> groups);
  std::size_t group_count() const { return offsets.size() - 1; }
  std::size_t rows() const { return offsets.back(); }
};

// Standard-normal draws for one ELBO estimate: one content and one style
// draw per member. Drawn content-first from the generator.
struct ElboNoise {
  Tensor content;  // [rows, d_content]
  Tensor style;    // [rows, d_style]; empty when d_style == 0

  static ElboNoise draw(std::size_t rows, const Architecture& arch, CounterRng& rng);
};

struct ElboBreakdown {
  double reconstruction = 0.0;
  double style_kl = 0.0;
  double content_kl = 0.0;
  double total = 0.0;
};

// Tape-side group ELBO terms, each [groups, 1].
struct ElboVars {
  Var reconstruction;
  Var style_kl;
  Var content_kl;
  Var total;
};

ElboVars group_elbo_terms(const BoundModel& model, const GroupBatch& batch, const ElboNoise& noise);

// Single-sample estimate of the group ELBO.
ElboBreakdown group_elbo(const Tensor& group, const ModelParams& params, const ElboNoise& noise);
ElboBreakdown group_elbo(const Tensor& group, const ModelParams& params, CounterRng& rng);

struct Encoding {
  DiagonalNormal style;
  DiagonalNormal content;
};

// Posterior parameters for a batch, one row per observation.
struct EncodedBatch {
  Tensor style_mean;
  Tensor style_variance;
  Tensor content_mean;
  Tensor content_variance;

  std::size_t rows() const { return content_mean.rows(); }
  DiagonalNormal style_row(std::size_t r) const;
  DiagonalNormal content_row(std::size_t r) const;
};

EncodedBatch encode_batch(const Tensor& observations, const ModelParams& params);
Encoding encode(std::span<const double> x, const ModelParams& params);

// Bernoulli means (Bernoulli likelihood) or Gaussian means, one row per latent pair.
Tensor decode_batch(const Tensor& content, const Tensor& style, const ModelParams& params);
std::vector<double> decode(std::span<const double> content, std::span<const double> style,
                           const ModelParams& params);

// Fuses per-observation content contributions into the group posterior.
DiagonalNormal group_content_posterior(std::span<const DiagonalNormal> contributions);

}  // namespace mlvae
