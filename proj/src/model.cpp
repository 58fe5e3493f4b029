#include "mlvae/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mlvae/ops.hpp"

namespace mlvae {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }
std::string to_string(Likelihood l) { return l == Likelihood::bernoulli ? "bernoulli" : "gaussian"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

Likelihood likelihood_from_string(const std::string& s) {
  if (s == "bernoulli") return Likelihood::bernoulli;
  if (s == "gaussian") return Likelihood::gaussian;
  throw std::invalid_argument("unknown likelihood '" + s + "'");
}

void Architecture::validate() const {
  if (input_dim == 0) throw std::invalid_argument("architecture: input_dim must be positive");
  if (d_content == 0) throw std::invalid_argument("architecture: d_content must be positive");
  if (likelihood == Likelihood::gaussian && !(observation_variance > 0.0)) {
    throw std::invalid_argument("architecture: observation_variance must be positive");
  }
}

namespace {

enum Slot : std::size_t {
  kEncHiddenW,
  kEncHiddenB,
  kStyleW,
  kStyleB,
  kContentW,
  kContentB,
  kDecHiddenW,
  kDecHiddenB,
  kDecOutW,
  kDecOutB,
  kSlotCount
};

constexpr std::size_t kMissing = static_cast<std::size_t>(-1);

struct SlotTable {
  std::size_t index[kSlotCount];
};

// Position of every layer slot in the flat parameter list.
SlotTable slot_table(const Architecture& arch) {
  SlotTable table;
  std::fill(std::begin(table.index), std::end(table.index), kMissing);
  std::size_t next = 0;
  auto take = [&](Slot s) { table.index[s] = next++; };
  if (arch.hidden > 0) {
    take(kEncHiddenW);
    take(kEncHiddenB);
  }
  if (arch.d_style > 0) {
    take(kStyleW);
    take(kStyleB);
  }
  take(kContentW);
  take(kContentB);
  if (arch.hidden > 0) {
    take(kDecHiddenW);
    take(kDecHiddenB);
  }
  take(kDecOutW);
  take(kDecOutB);
  return table;
}

}  // namespace

std::vector<std::pair<std::string, Shape>> ModelParams::layout(const Architecture& arch) {
  arch.validate();
  const std::size_t D = arch.input_dim;
  const std::size_t H = arch.hidden;
  const std::size_t trunk = H > 0 ? H : D;
  const std::size_t dec_in = arch.d_content + arch.d_style;
  std::vector<std::pair<std::string, Shape>> out;
  if (H > 0) {
    out.push_back({"encoder.hidden.weight", {D, H}});
    out.push_back({"encoder.hidden.bias", {H}});
  }
  if (arch.d_style > 0) {
    out.push_back({"encoder.style.weight", {trunk, 2 * arch.d_style}});
    out.push_back({"encoder.style.bias", {2 * arch.d_style}});
  }
  out.push_back({"encoder.content.weight", {trunk, 2 * arch.d_content}});
  out.push_back({"encoder.content.bias", {2 * arch.d_content}});
  if (H > 0) {
    out.push_back({"decoder.hidden.weight", {dec_in, H}});
    out.push_back({"decoder.hidden.bias", {H}});
  }
  out.push_back({"decoder.output.weight", {H > 0 ? H : dec_in, D}});
  out.push_back({"decoder.output.bias", {D}});
  return out;
}

ModelParams::ModelParams(Architecture arch, std::vector<Parameter> params)
    : arch_(std::move(arch)), params_(std::move(params)) {
  const auto expected = layout(arch_);
  if (expected.size() != params_.size()) {
    throw ShapeError("model parameters: expected " + std::to_string(expected.size()) + " tensors, got " +
                     std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (params_[i].name != expected[i].first || params_[i].value.shape() != expected[i].second) {
      throw ShapeError("model parameter " + expected[i].first + ": expected shape " +
                       shape_to_string(expected[i].second) + ", got " + params_[i].name + " " +
                       shape_to_string(params_[i].value.shape()));
    }
    params_[i].value.require_finite(params_[i].name);
  }
}

ModelParams ModelParams::initialize(const Architecture& arch, CounterRng& rng) {
  std::vector<Parameter> params;
  for (auto& [name, shape] : layout(arch)) {
    Tensor value(shape);
    if (shape.size() == 2) {
      const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      for (double& v : value.values()) v = (2.0 * rng.uniform() - 1.0) * limit;
    }
    params.push_back({name, std::move(value)});
  }
  return ModelParams(arch, std::move(params));
}

std::vector<Tensor> ModelParams::values() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

std::vector<std::string> ModelParams::names() const {
  std::vector<std::string> out;
  for (const auto& p : params_) out.push_back(p.name);
  return out;
}

void ModelParams::set_values(std::span<const Tensor> values) {
  if (values.size() != params_.size()) throw ShapeError("set_values: tensor count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape() != params_[i].value.shape()) {
      throw ShapeError("set_values: shape mismatch for " + params_[i].name);
    }
    values[i].require_finite(params_[i].name);
  }
  for (std::size_t i = 0; i < values.size(); ++i) params_[i].value = values[i];
}

const Tensor& ModelParams::at(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.value;
  throw std::out_of_range("no model parameter named " + name);
}

Tensor& ModelParams::at(const std::string& name) {
  return const_cast<Tensor&>(static_cast<const ModelParams&>(*this).at(name));
}

bool ModelParams::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
}

// ---------------------------------------------------------------------------

BoundModel::BoundModel(Tape& tape, const ModelParams& params, bool trainable)
    : tape_(&tape), arch_(params.architecture()) {
  for (const auto& p : params.parameters()) {
    vars_.push_back(trainable ? tape.variable(p.value) : tape.constant(p.value));
  }
}

BoundModel::BoundModel(Tape& tape, const Architecture& arch, std::span<const Var> vars)
    : tape_(&tape), arch_(arch), vars_(vars.begin(), vars.end()) {
  const auto expected = ModelParams::layout(arch);
  if (expected.size() != vars_.size()) throw ShapeError("BoundModel: variable count does not match layout");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (vars_[i].shape() != expected[i].second) throw ShapeError("BoundModel: shape mismatch for " + expected[i].first);
  }
}

namespace {

Var activate(Var x, Activation a) { return a == Activation::relu ? ops::relu(x) : ops::tanh(x); }

}  // namespace

EncodedVars BoundModel::encode(Var observations) const {
  const auto slots = slot_table(arch_);
  if (observations.value().rank() != 2 || observations.value().cols() != arch_.input_dim) {
    throw ShapeError("encode: expected observations of width " + std::to_string(arch_.input_dim) + ", got " +
                     shape_to_string(observations.shape()));
  }
  Var trunk = observations;
  if (arch_.hidden > 0) {
    trunk = activate(ops::affine(observations, param(slots.index[kEncHiddenW]), param(slots.index[kEncHiddenB])),
                     arch_.activation);
  }
  EncodedVars out;
  if (arch_.d_style > 0) {
    Var head = ops::affine(trunk, param(slots.index[kStyleW]), param(slots.index[kStyleB]));
    out.style_mean = ops::slice_cols(head, 0, arch_.d_style);
    out.style_log_variance = ops::slice_cols(head, arch_.d_style, arch_.d_style);
  }
  Var head = ops::affine(trunk, param(slots.index[kContentW]), param(slots.index[kContentB]));
  out.content_mean = ops::slice_cols(head, 0, arch_.d_content);
  out.content_log_variance = ops::slice_cols(head, arch_.d_content, arch_.d_content);
  return out;
}

Var BoundModel::decode_raw(Var content, Var style) const {
  const auto slots = slot_table(arch_);
  if (content.value().rank() != 2 || content.value().cols() != arch_.d_content) {
    throw ShapeError("decode: content width must be " + std::to_string(arch_.d_content));
  }
  Var latent = content;
  if (arch_.d_style > 0) {
    if (!style.valid() || style.value().rank() != 2 || style.value().cols() != arch_.d_style ||
        style.value().rows() != content.value().rows()) {
      throw ShapeError("decode: style must be [rows, " + std::to_string(arch_.d_style) + "]");
    }
    latent = ops::concat_cols(content, style);
  }
  Var h = latent;
  if (arch_.hidden > 0) {
    h = activate(ops::affine(latent, param(slots.index[kDecHiddenW]), param(slots.index[kDecHiddenB])),
                 arch_.activation);
  }
  return ops::affine(h, param(slots.index[kDecOutW]), param(slots.index[kDecOutB]));
}

Var BoundModel::log_likelihood_rows(Var observations, Var decoded_raw) const {
  if (observations.shape() != decoded_raw.shape()) throw ShapeError("log_likelihood: shape mismatch");
  if (arch_.likelihood == Likelihood::bernoulli) {
    Tensor complement = observations.value();
    for (double& v : complement.values()) v = 1.0 - v;
    Var one_minus_x = tape_->constant(std::move(complement));
    Var ll = observations * ops::log_sigmoid(decoded_raw) + one_minus_x * ops::log_sigmoid(-decoded_raw);
    return ops::sum_cols(ll);
  }
  const double var = arch_.observation_variance;
  const double d = static_cast<double>(arch_.input_dim);
  Var diff = observations - decoded_raw;
  Var sq = ops::sum_cols(diff * diff);
  return (-0.5 / var) * sq - 0.5 * d * std::log(2.0 * std::numbers::pi * var);
}

// ---------------------------------------------------------------------------

GroupBatch GroupBatch::from_groups(std::span<const Tensor> groups) {
  if (groups.empty()) throw std::invalid_argument("GroupBatch: no groups");
  const std::size_t width = groups.front().cols();
  std::size_t rows = 0;
  for (const auto& g : groups) {
    if (g.rank() != 2 || g.cols() != width) throw ShapeError("GroupBatch: groups differ in observation width");
    rows += g.rows();
  }
  GroupBatch batch;
  batch.observations = Tensor({rows, width});
  batch.offsets.push_back(0);
  std::size_t at = 0;
  for (const auto& g : groups) {
    std::copy(g.values().begin(), g.values().end(), batch.observations.data() + at * width);
    at += g.rows();
    batch.offsets.push_back(at);
  }
  return batch;
}

ElboNoise ElboNoise::draw(std::size_t rows, const Architecture& arch, CounterRng& rng) {
  ElboNoise noise;
  noise.content = rng.normal_tensor({rows, arch.d_content});
  if (arch.d_style > 0) noise.style = rng.normal_tensor({rows, arch.d_style});
  return noise;
}

ElboVars group_elbo_terms(const BoundModel& model, const GroupBatch& batch, const ElboNoise& noise) {
  const auto& arch = model.architecture();
  Tape& tape = model.tape();
  const std::size_t rows = batch.rows();
  if (batch.group_count() == 0) throw std::invalid_argument("group_elbo: empty batch");
  if (noise.content.shape() != Shape{rows, arch.d_content}) throw ShapeError("group_elbo: content noise shape");
  if (arch.d_style > 0 && noise.style.shape() != Shape{rows, arch.d_style}) {
    throw ShapeError("group_elbo: style noise shape");
  }

  Var x = tape.constant(batch.observations);
  const EncodedVars enc = model.encode(x);
  const auto fused = dist::fuse_segments(enc.content_mean, enc.content_log_variance, batch.offsets);

  std::vector<std::size_t> member_group(rows);
  for (std::size_t g = 0; g + 1 < batch.offsets.size(); ++g)
    for (std::size_t r = batch.offsets[g]; r < batch.offsets[g + 1]; ++r) member_group[r] = g;

  // One content draw per member from the shared group posterior.
  Var content = dist::reparameterize_log_variance(ops::gather_rows(fused.mean, member_group),
                                                  ops::gather_rows(fused.log_variance, member_group),
                                                  tape.constant(noise.content));
  Var style;
  if (arch.d_style > 0) {
    style = dist::reparameterize_log_variance(enc.style_mean, enc.style_log_variance, tape.constant(noise.style));
  }
  Var decoded = model.decode_raw(content, style);

  ElboVars out;
  out.reconstruction = ops::segment_sum_rows(model.log_likelihood_rows(x, decoded), batch.offsets);
  out.content_kl = dist::kl_to_standard_normal_rows(fused.mean, fused.log_variance);
  if (arch.d_style > 0) {
    out.style_kl = ops::segment_sum_rows(
        dist::kl_to_standard_normal_rows(enc.style_mean, enc.style_log_variance), batch.offsets);
    out.total = out.reconstruction - out.style_kl - out.content_kl;
  } else {
    out.style_kl = tape.constant(Tensor({batch.group_count(), 1}));
    out.total = out.reconstruction - out.content_kl;
  }
  return out;
}

ElboBreakdown group_elbo(const Tensor& group, const ModelParams& params, const ElboNoise& noise) {
  if (group.empty() || group.rank() != 2) throw std::invalid_argument("group_elbo: empty group");
  Tape tape;
  BoundModel model(tape, params, false);
  const Tensor groups[1] = {group};
  const auto terms = group_elbo_terms(model, GroupBatch::from_groups(groups), noise);
  ElboBreakdown out{terms.reconstruction.value().item(), terms.style_kl.value().item(),
                    terms.content_kl.value().item(), terms.total.value().item()};
  return out;
}

ElboBreakdown group_elbo(const Tensor& group, const ModelParams& params, CounterRng& rng) {
  if (group.empty() || group.rank() != 2) throw std::invalid_argument("group_elbo: empty group");
  return group_elbo(group, params, ElboNoise::draw(group.rows(), params.architecture(), rng));
}

// ---------------------------------------------------------------------------

namespace {

void check_pixels(const Tensor& observations, const Architecture& arch) {
  if (arch.likelihood != Likelihood::bernoulli) return;
  for (double v : observations.values()) {
    if (v < 0.0 || v > 1.0) throw std::invalid_argument("encode: pixel values must lie in [0, 1]");
  }
}

Tensor exp_tensor(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.values()) v = std::exp(v);
  return out;
}

DiagonalNormal row_normal(const Tensor& mean, const Tensor& variance, std::size_t r) {
  const std::size_t d = mean.cols();
  return DiagonalNormal(std::vector<double>(mean.data() + r * d, mean.data() + (r + 1) * d),
                        std::vector<double>(variance.data() + r * d, variance.data() + (r + 1) * d));
}

}  // namespace

DiagonalNormal EncodedBatch::style_row(std::size_t r) const { return row_normal(style_mean, style_variance, r); }
DiagonalNormal EncodedBatch::content_row(std::size_t r) const {
  return row_normal(content_mean, content_variance, r);
}

EncodedBatch encode_batch(const Tensor& observations, const ModelParams& params) {
  check_pixels(observations, params.architecture());
  Tape tape;
  BoundModel model(tape, params, false);
  const auto enc = model.encode(tape.constant(observations));
  EncodedBatch out;
  if (params.architecture().d_style > 0) {
    out.style_mean = enc.style_mean.value();
    out.style_variance = exp_tensor(enc.style_log_variance.value());
  }
  out.content_mean = enc.content_mean.value();
  out.content_variance = exp_tensor(enc.content_log_variance.value());
  return out;
}

Encoding encode(std::span<const double> x, const ModelParams& params) {
  const auto& arch = params.architecture();
  if (x.size() != arch.input_dim) {
    throw ShapeError("encode: observation has " + std::to_string(x.size()) + " values, expected " +
                     std::to_string(arch.input_dim));
  }
  const auto batch = encode_batch(Tensor({1, x.size()}, std::vector<double>(x.begin(), x.end())), params);
  Encoding out;
  if (arch.d_style > 0) out.style = batch.style_row(0);
  out.content = batch.content_row(0);
  return out;
}

Tensor decode_batch(const Tensor& content, const Tensor& style, const ModelParams& params) {
  const auto& arch = params.architecture();
  Tape tape;
  BoundModel model(tape, params, false);
  Var style_var;
  if (arch.d_style > 0) style_var = tape.constant(style);
  Var raw = model.decode_raw(tape.constant(content), style_var);
  Tensor out = raw.value();
  if (arch.likelihood == Likelihood::bernoulli) {
    // Keep saturated logits strictly inside (0, 1).
    constexpr double kEdge = 1e-12;
    out = ops::sigmoid(raw).value();
    for (double& v : out.values()) v = std::clamp(v, kEdge, 1.0 - kEdge);
  }
  return out;
}

std::vector<double> decode(std::span<const double> content, std::span<const double> style,
                           const ModelParams& params) {
  const auto& arch = params.architecture();
  if (content.size() != arch.d_content || style.size() != arch.d_style) {
    throw ShapeError("decode: latent dimensions do not match the architecture");
  }
  Tensor c({1, content.size()}, std::vector<double>(content.begin(), content.end()));
  Tensor s;
  if (arch.d_style > 0) s = Tensor({1, style.size()}, std::vector<double>(style.begin(), style.end()));
  return decode_batch(c, s, params).storage();
}

DiagonalNormal group_content_posterior(std::span<const DiagonalNormal> contributions) {
  return product_of_normals(contributions);
}

}  // namespace mlvae
