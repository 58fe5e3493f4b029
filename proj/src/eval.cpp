#include "mlvae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "mlvae/distributions.hpp"
#include "mlvae/ops.hpp"

namespace mlvae {

namespace fs = std::filesystem;

void EvalConfig::validate() const {
  if (K == 0) throw std::invalid_argument("eval: K must be at least 1");
  if (k_values.empty()) throw std::invalid_argument("eval: k_values is empty");
  for (std::size_t k : k_values) {
    if (k == 0) throw std::invalid_argument("eval: k must be at least 1");
    if (k > K) {
      throw std::invalid_argument("eval: k = " + std::to_string(k) + " exceeds K = " + std::to_string(K));
    }
  }
  if (classifier_hidden == 0 || batch_size == 0) throw std::invalid_argument("eval: classifier sizes must be positive");
  if (interpolation_steps < 2) throw std::invalid_argument("eval: interpolation_steps must be at least 2");
  optimizer.validate();
}

// ---------------------------------------------------------------------------

namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, CounterRng& rng) {
  Tensor w({fan_in, fan_out});
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : w.values()) v = limit * (2.0 * rng.uniform() - 1.0);
  return w;
}

Var classifier_forward(std::span<const Var> p, Var x) {
  Var h = ops::relu(ops::affine(x, p[0], p[1]));
  h = ops::relu(ops::affine(h, p[2], p[3]));
  return ops::log_softmax_rows(ops::affine(h, p[4], p[5]));
}

Tensor take_rows(const Tensor& t, std::span<const std::size_t> rows) {
  Tensor out({rows.size(), t.cols()});
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(t.data() + rows[r] * t.cols(), t.data() + (rows[r] + 1) * t.cols(), out.data() + r * t.cols());
  return out;
}

}  // namespace

Classifier Classifier::train(const Tensor& features, std::span<const std::size_t> labels, std::size_t classes,
                             const ClassifierConfig& config) {
  if (features.rank() != 2 || features.rows() != labels.size() || labels.empty()) {
    throw std::invalid_argument("classifier: need one label per feature row");
  }
  if (classes < 2) throw std::invalid_argument("classifier: need at least two classes");
  for (auto l : labels)
    if (l >= classes) throw std::invalid_argument("classifier: label out of range");
  if (config.batch_size == 0 || config.hidden == 0) throw std::invalid_argument("classifier: sizes must be positive");

  CounterRng rng = CounterRng(config.seed).fork("classifier");
  CounterRng init = rng.fork("init");
  const std::size_t d = features.cols(), h = config.hidden;
  Classifier c;
  c.classes_ = classes;
  c.params_ = {glorot(d, h, init),       Tensor({h}), glorot(h, h, init), Tensor({h}),
               glorot(h, classes, init), Tensor({classes})};
  OptimizerState state = OptimizerState::zeros_like(c.params_);

  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  CounterRng batches = rng.fork("batches");
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, batches);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - begin);
      const std::span<const std::size_t> rows(order.data() + begin, count);
      Tensor onehot({count, classes});
      for (std::size_t r = 0; r < count; ++r) onehot.at(r, labels[rows[r]]) = 1.0;

      Tape tape;
      std::vector<Var> vars;
      for (const auto& p : c.params_) vars.push_back(tape.variable(p));
      const Var logp = classifier_forward(vars, tape.constant(take_rows(features, rows)));
      const Var loss = -(1.0 / static_cast<double>(count)) * ops::sum(logp * tape.constant(onehot));
      tape.backward(loss);
      std::vector<Tensor> grads;
      for (const auto& v : vars) grads.push_back(tape.gradient(v));
      adam_step(c.params_, grads, state, config.optimizer);
    }
  }
  return c;
}

Tensor Classifier::log_probabilities(const Tensor& features) const {
  if (params_.empty()) throw std::logic_error("classifier used before training");
  Tape tape;
  std::vector<Var> vars;
  for (const auto& p : params_) vars.push_back(tape.constant(p));
  return classifier_forward(vars, tape.constant(features)).value();
}

std::vector<std::size_t> Classifier::predict(const Tensor& features) const {
  const Tensor logp = log_probabilities(features);
  std::vector<std::size_t> out(logp.rows());
  for (std::size_t r = 0; r < logp.rows(); ++r) {
    const double* row = logp.data() + r * logp.cols();
    out[r] = static_cast<std::size_t>(std::max_element(row, row + logp.cols()) - row);
  }
  return out;
}

ClassifierScore Classifier::score(const Tensor& features, std::span<const std::size_t> labels) const {
  if (features.rows() != labels.size() || labels.empty()) {
    throw std::invalid_argument("classifier: need one label per feature row");
  }
  const Tensor logp = log_probabilities(features);
  ClassifierScore s;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const double* row = logp.data() + r * logp.cols();
    const auto best = static_cast<std::size_t>(std::max_element(row, row + logp.cols()) - row);
    if (best == labels[r]) s.accuracy += 1.0;
    s.conditional_entropy -= row[labels[r]];
  }
  s.accuracy /= static_cast<double>(labels.size());
  s.conditional_entropy /= static_cast<double>(labels.size());
  return s;
}

// ---------------------------------------------------------------------------

void MetricsTable::validate() const {
  for (const auto& r : rows) {
    if (!(r.accuracy >= 0.0 && r.accuracy <= 1.0)) throw std::logic_error("metrics: accuracy outside [0, 1]");
    if (!(r.conditional_entropy >= 0.0)) throw std::logic_error("metrics: negative conditional entropy");
  }
}

const MetricsRow& MetricsTable::at(const std::string& feature_set, std::size_t k) const {
  for (const auto& r : rows)
    if (r.feature_set == feature_set && r.k == k) return r;
  throw std::out_of_range("metrics: no row for " + feature_set + " at k = " + std::to_string(k));
}

void write_metrics_table_csv(const fs::path& path, const MetricsTable& table) {
  table.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "feature_set,k,accuracy,conditional_entropy\n";
  char line[160];
  for (const auto& r : table.rows) {
    std::snprintf(line, sizeof line, "%s,%zu,%.17g,%.17g\n", r.feature_set.c_str(), r.k, r.accuracy,
                  r.conditional_entropy);
    out << line;
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::pair<GroupedDataset, GroupedDataset> classifier_split(const GroupedDataset& dataset, std::uint64_t seed) {
  CounterRng rng = CounterRng(seed).fork("classifier-split");
  std::vector<std::size_t> first, second;
  for (const auto& group : dataset.groups()) {
    auto members = group;
    shuffle(members, rng);
    for (std::size_t k = 0; k < members.size(); ++k) (k % 2 == 0 ? first : second).push_back(members[k]);
  }
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  return {dataset.subset(first), dataset.subset(second)};
}

Tensor accumulated_content_features(const EncodedBatch& encoded, const GroupedDataset& dataset, std::size_t k,
                                    CounterRng& rng) {
  if (k == 0) throw std::invalid_argument("evidence count k must be at least 1");
  if (encoded.rows() != dataset.size()) throw std::invalid_argument("encodings do not match the dataset");
  const std::size_t d = encoded.content_mean.cols();
  Tensor out({dataset.size(), d});
  for (std::size_t g = 0; g < dataset.group_count(); ++g) {
    const auto& members = dataset.groups()[g];
    if (members.size() < k) {
      const std::string name = dataset.has_labels() ? dataset.group_labels()[g] : std::to_string(g);
      throw std::invalid_argument("class " + name + " has " + std::to_string(members.size()) +
                                  " images, fewer than k = " + std::to_string(k));
    }
    for (std::size_t pos = 0; pos < members.size(); ++pos) {
      std::vector<DiagonalNormal> evidence = {encoded.content_row(members[pos])};
      // k - 1 others from the remaining members.
      for (std::size_t pick : sample_without_replacement(members.size() - 1, k - 1, rng)) {
        evidence.push_back(encoded.content_row(members[pick < pos ? pick : pick + 1]));
      }
      const DiagonalNormal fused = product_of_normals(evidence);
      std::copy(fused.mean.begin(), fused.mean.end(), out.data() + members[pos] * d);
    }
  }
  return out;
}

namespace {

constexpr std::size_t kEncodeChunk = 512;

EncodedBatch encode_dataset(const GroupedDataset& dataset, const ModelParams& params) {
  std::vector<EncodedBatch> parts;
  for (std::size_t begin = 0; begin < dataset.size(); begin += kEncodeChunk) {
    std::vector<std::size_t> rows(std::min(kEncodeChunk, dataset.size() - begin));
    std::iota(rows.begin(), rows.end(), begin);
    parts.push_back(encode_batch(dataset.gather(rows), params));
  }
  auto stack = [&](Tensor EncodedBatch::*field) {
    if ((parts.front().*field).empty()) return Tensor();
    const std::size_t cols = (parts.front().*field).cols();
    Tensor out({dataset.size(), cols});
    std::size_t at = 0;
    for (const auto& p : parts) {
      std::copy((p.*field).values().begin(), (p.*field).values().end(), out.data() + at);
      at += (p.*field).size();
    }
    return out;
  };
  EncodedBatch out;
  out.style_mean = stack(&EncodedBatch::style_mean);
  out.style_variance = stack(&EncodedBatch::style_variance);
  out.content_mean = stack(&EncodedBatch::content_mean);
  out.content_variance = stack(&EncodedBatch::content_variance);
  return out;
}

std::vector<std::size_t> class_labels(const GroupedDataset& dataset) { return dataset.membership(); }

void append_accumulated_rows(MetricsTable& table, const std::string& name, const ModelParams& params,
                             const GroupedDataset& train_side, const GroupedDataset& test_side,
                             const EvalConfig& config, const ClassifierConfig& classifier) {
  const auto train_enc = encode_dataset(train_side, params);
  const auto test_enc = encode_dataset(test_side, params);
  const CounterRng root = CounterRng(config.seed).fork(name);
  CounterRng train_rng = root.fork("train-evidence");
  const Tensor train_features = accumulated_content_features(train_enc, train_side, config.K, train_rng);
  const auto model = Classifier::train(train_features, class_labels(train_side), train_side.group_count(), classifier);
  for (std::size_t k : config.k_values) {
    // Reseeded per k so evidence draws at different k are independent.
    CounterRng test_rng = root.fork("test-evidence").fork(static_cast<std::uint64_t>(k));
    const Tensor features = accumulated_content_features(test_enc, test_side, k, test_rng);
    const auto s = model.score(features, class_labels(test_side));
    table.rows.push_back({name, k, s.accuracy, s.conditional_entropy});
  }
}

}  // namespace

MetricsTable disentanglement_eval(const ModelParams& model, const GroupedDataset& dataset, const EvalConfig& config,
                                  const ModelParams* baseline) {
  config.validate();
  if (model.architecture().d_style == 0) throw std::invalid_argument("eval: model has no style factor");
  if (baseline && baseline->architecture().d_style != 0) {
    throw std::invalid_argument("eval: the baseline must be a single-latent model (d_style = 0)");
  }
  if (dataset.group_count() < 2) throw std::invalid_argument("eval: need at least two classes");
  const auto [train_side, test_side] = classifier_split(dataset, config.seed);
  const std::size_t max_k = *std::max_element(config.k_values.begin(), config.k_values.end());
  for (std::size_t g = 0; g < dataset.group_count(); ++g) {
    const std::string name = dataset.has_labels() ? dataset.group_labels()[g] : std::to_string(g);
    if (train_side.groups()[g].size() < config.K) {
      throw std::invalid_argument("class " + name + " has " + std::to_string(train_side.groups()[g].size()) +
                                  " classifier-training images, fewer than K = " + std::to_string(config.K));
    }
    if (test_side.groups()[g].size() < max_k) {
      throw std::invalid_argument("class " + name + " has " + std::to_string(test_side.groups()[g].size()) +
                                  " test images, fewer than k = " + std::to_string(max_k));
    }
  }

  ClassifierConfig classifier{config.classifier_hidden, config.classifier_epochs, config.batch_size, config.optimizer,
                              config.seed};
  MetricsTable table;

  {
    const auto train_enc = encode_dataset(train_side, model);
    const auto test_enc = encode_dataset(test_side, model);
    const auto style_model =
        Classifier::train(train_enc.style_mean, class_labels(train_side), train_side.group_count(), classifier);
    const auto s = style_model.score(test_enc.style_mean, class_labels(test_side));
    for (std::size_t k : config.k_values) table.rows.push_back({"style", k, s.accuracy, s.conditional_entropy});
  }
  append_accumulated_rows(table, "content", model, train_side, test_side, config, classifier);
  if (baseline) append_accumulated_rows(table, "baseline-vae", *baseline, train_side, test_side, config, classifier);
  table.validate();
  return table;
}

// ---------------------------------------------------------------------------

std::string to_string(CellRole role) {
  switch (role) {
    case CellRole::empty: return "empty";
    case CellRole::input: return "input";
    case CellRole::reconstruction: return "reconstruction";
    case CellRole::swapped: return "swapped";
    case CellRole::interpolated: return "interpolated";
    case CellRole::generated: return "generated";
  }
  return "unknown";
}

ImageGrid::ImageGrid(std::size_t r, std::size_t c, ImageFormat f)
    : rows(r), cols(c), format(f), images(r * c, std::vector<float>(f.pixels(), 0.0f)), roles(r * c, CellRole::empty),
      latents(r * c) {}

void ImageGrid::validate() const {
  if (images.size() != rows * cols || roles.size() != rows * cols || latents.size() != rows * cols) {
    throw std::logic_error("image grid: cell count does not match its shape");
  }
  for (const auto& img : images)
    if (img.size() != format.pixels()) throw std::logic_error("image grid: cells differ in size");
}

namespace {

// Square images only: side^2 and 3 side^2 never coincide, so the channel
// count follows from the input width.
ImageFormat format_for(const ModelParams& params) {
  const std::size_t d = params.architecture().input_dim;
  if (d % 3 == 0) {
    const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(d / 3))));
    if (side * side * 3 == d) return {side, side, 3};
  }
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(d))));
  if (side * side == d) return {side, side, 1};
  return {d, 1, 1};
}

std::vector<float> to_floats(std::span<const double> values) { return {values.begin(), values.end()}; }

std::vector<double> row_of(const Tensor& t, std::size_t r) {
  return {t.data() + r * t.cols(), t.data() + (r + 1) * t.cols()};
}

// Decodes (content_i, style_i) pairs in one pass.
Tensor decode_pairs(const ModelParams& params, const std::vector<std::vector<double>>& contents,
                    const std::vector<std::vector<double>>& styles) {
  const auto& arch = params.architecture();
  Tensor c({contents.size(), arch.d_content});
  Tensor s({contents.size(), std::max<std::size_t>(arch.d_style, 1)});
  for (std::size_t i = 0; i < contents.size(); ++i) {
    std::copy(contents[i].begin(), contents[i].end(), c.data() + i * arch.d_content);
    if (arch.d_style > 0) std::copy(styles[i].begin(), styles[i].end(), s.data() + i * arch.d_style);
  }
  return decode_batch(c, s, params);
}

void require_images(const ModelParams& params, const Tensor& images, const char* what) {
  if (images.empty() || images.rank() != 2 || images.rows() == 0) {
    throw std::invalid_argument(std::string(what) + ": no images");
  }
  if (images.cols() != params.architecture().input_dim) {
    throw ShapeError(std::string(what) + ": images have " + std::to_string(images.cols()) +
                     " values, model expects " + std::to_string(params.architecture().input_dim));
  }
}

}  // namespace

ImageGrid swap_grid(const ModelParams& params, const Tensor& images, std::span<const std::optional<Tensor>> evidence) {
  require_images(params, images, "swap_grid");
  if (params.architecture().d_style == 0) throw std::invalid_argument("swap_grid: model has no style factor");
  const std::size_t n = images.rows();
  if (!evidence.empty() && evidence.size() != n) {
    throw std::invalid_argument("swap_grid: evidence list must have one entry per image");
  }
  const auto enc = encode_batch(images, params);
  std::vector<std::vector<double>> content(n), style(n);
  for (std::size_t j = 0; j < n; ++j) {
    style[j] = row_of(enc.style_mean, j);
    std::vector<DiagonalNormal> parts = {enc.content_row(j)};
    if (!evidence.empty() && evidence[j]) {
      const Tensor& extra = *evidence[j];
      if (extra.rank() != 2 || extra.cols() != images.cols()) {
        throw ShapeError("swap_grid: evidence for image " + std::to_string(j) + " has shape " +
                         shape_to_string(extra.shape()) + ", expected [*," + std::to_string(images.cols()) + "]");
      }
      const auto extra_enc = encode_batch(extra, params);
      for (std::size_t r = 0; r < extra.rows(); ++r) parts.push_back(extra_enc.content_row(r));
    }
    content[j] = product_of_normals(parts).mean;
  }

  ImageGrid grid(n + 1, n + 1, format_for(params));
  for (std::size_t i = 0; i < n; ++i) {
    const auto input = to_floats(images.values().subspan(i * images.cols(), images.cols()));
    grid.image(0, i + 1) = input;
    grid.role(0, i + 1) = CellRole::input;
    grid.image(i + 1, 0) = input;
    grid.role(i + 1, 0) = CellRole::input;
  }
  std::vector<std::vector<double>> cs, ss;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      cs.push_back(content[j]);
      ss.push_back(style[i]);
    }
  const Tensor decoded = decode_pairs(params, cs, ss);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t idx = i * n + j;
      grid.image(i + 1, j + 1) = to_floats(decoded.values().subspan(idx * decoded.cols(), decoded.cols()));
      grid.role(i + 1, j + 1) = i == j ? CellRole::reconstruction : CellRole::swapped;
      grid.latent(i + 1, j + 1) = {content[j], style[i]};
    }
  return grid;
}

ImageGrid interpolate(const ModelParams& params, std::span<const double> image_a, std::span<const double> image_b,
                      std::size_t steps) {
  if (steps < 2) throw std::invalid_argument("interpolate: steps must be at least 2");
  const std::size_t d = params.architecture().input_dim;
  if (image_a.size() != d || image_b.size() != d) {
    throw ShapeError("interpolate: images must have " + std::to_string(d) + " values");
  }
  if (params.architecture().d_style == 0) throw std::invalid_argument("interpolate: model has no style factor");
  const auto a = encode(image_a, params);
  const auto b = encode(image_b, params);
  auto lerp = [](const std::vector<double>& x, const std::vector<double>& y, double t) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (1.0 - t) * x[i] + t * y[i];
    return out;
  };
  const double last = static_cast<double>(steps - 1);
  std::vector<std::vector<double>> cs, ss;
  for (std::size_t r = 0; r < steps; ++r)
    for (std::size_t c = 0; c < steps; ++c) {
      cs.push_back(lerp(a.content.mean, b.content.mean, static_cast<double>(c) / last));
      ss.push_back(lerp(a.style.mean, b.style.mean, static_cast<double>(r) / last));
    }
  const Tensor decoded = decode_pairs(params, cs, ss);
  ImageGrid grid(steps, steps, format_for(params));
  for (std::size_t idx = 0; idx < steps * steps; ++idx) {
    grid.images[idx] = to_floats(decoded.values().subspan(idx * d, d));
    grid.roles[idx] = CellRole::interpolated;
    grid.latents[idx] = {cs[idx], ss[idx]};
  }
  return grid;
}

ImageGrid generate_for_group(const ModelParams& params, const Tensor& group, std::size_t n_styles, CounterRng& rng) {
  require_images(params, group, "generate_for_group");
  const auto& arch = params.architecture();
  const auto enc = encode_batch(group, params);
  std::vector<DiagonalNormal> parts;
  for (std::size_t r = 0; r < group.rows(); ++r) parts.push_back(enc.content_row(r));
  const auto content = product_of_normals(parts).mean;

  ImageGrid grid(n_styles == 0 ? 0 : 1, n_styles, format_for(params));
  if (n_styles == 0) return grid;
  std::vector<std::vector<double>> cs(n_styles, content), ss;
  for (std::size_t i = 0; i < n_styles; ++i) {
    std::vector<double> s(arch.d_style);
    for (double& v : s) v = rng.normal();
    ss.push_back(std::move(s));
  }
  const Tensor decoded = decode_pairs(params, cs, ss);
  for (std::size_t i = 0; i < n_styles; ++i) {
    grid.images[i] = to_floats(decoded.values().subspan(i * decoded.cols(), decoded.cols()));
    grid.roles[i] = CellRole::generated;
    grid.latents[i] = {content, ss[i]};
  }
  return grid;
}

ImageGrid reconstruct_compare(const ModelParams& params, const Tensor& group) {
  require_images(params, group, "reconstruct_compare");
  const std::size_t n = group.rows();
  const auto enc = encode_batch(group, params);
  std::vector<DiagonalNormal> parts;
  for (std::size_t r = 0; r < n; ++r) parts.push_back(enc.content_row(r));
  const auto fused = product_of_normals(parts).mean;

  std::vector<std::vector<double>> cs, ss;
  for (std::size_t r = 0; r < n; ++r) {
    const auto style = params.architecture().d_style > 0 ? row_of(enc.style_mean, r) : std::vector<double>{};
    cs.push_back(row_of(enc.content_mean, r));
    ss.push_back(style);
    cs.push_back(fused);
    ss.push_back(style);
  }
  const Tensor decoded = decode_pairs(params, cs, ss);
  ImageGrid grid(n, 3, format_for(params));
  if (n == 1) grid.warnings.push_back("reconstruct_compare: singleton group, both strategies coincide");
  for (std::size_t r = 0; r < n; ++r) {
    grid.image(r, 0) = to_floats(group.values().subspan(r * group.cols(), group.cols()));
    grid.role(r, 0) = CellRole::input;
    for (std::size_t s = 0; s < 2; ++s) {
      const std::size_t idx = 2 * r + s;
      grid.image(r, 1 + s) = to_floats(decoded.values().subspan(idx * decoded.cols(), decoded.cols()));
      grid.role(r, 1 + s) = CellRole::reconstruction;
      grid.latent(r, 1 + s) = {cs[idx], ss[idx]};
    }
  }
  return grid;
}

void write_grid(const ImageGrid& grid, const fs::path& path) {
  grid.validate();
  const auto& f = grid.format;
  if (f.channels != 1 && f.channels != 3) throw std::invalid_argument("write_grid: need 1 or 3 channels");
  const std::size_t width = std::max<std::size_t>(grid.cols * f.width, 1);
  const std::size_t height = std::max<std::size_t>(grid.rows * f.height, 1);
  std::string pixels(width * height * f.channels, '\0');
  for (std::size_t r = 0; r < grid.rows; ++r)
    for (std::size_t c = 0; c < grid.cols; ++c) {
      const auto& img = grid.image(r, c);
      for (std::size_t y = 0; y < f.height; ++y)
        for (std::size_t x = 0; x < f.width; ++x)
          for (std::size_t ch = 0; ch < f.channels; ++ch) {
            const float v = std::clamp(img[(y * f.width + x) * f.channels + ch], 0.0f, 1.0f);
            const std::size_t out = ((r * f.height + y) * width + c * f.width + x) * f.channels + ch;
            pixels[out] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f)));
          }
    }
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << (f.channels == 1 ? "P5" : "P6") << "\n" << width << " " << height << "\n255\n";
    out.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
    if (!out) throw std::runtime_error("failed writing " + path.string());
  }
  std::ofstream roles(path.string() + ".roles.txt", std::ios::trunc);
  roles << "# rows " << grid.rows << " cols " << grid.cols << " cell " << f.width << "x" << f.height << "\n";
  roles << "row,col,role\n";
  for (std::size_t r = 0; r < grid.rows; ++r)
    for (std::size_t c = 0; c < grid.cols; ++c) roles << r << "," << c << "," << to_string(grid.role(r, c)) << "\n";
  for (const auto& w : grid.warnings) roles << "# warning: " << w << "\n";
  if (!roles) throw std::runtime_error("failed writing roles for " + path.string());
}

}  // namespace mlvae
