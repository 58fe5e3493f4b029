#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlvae/dataset.hpp"
#include "mlvae/model.hpp"
#include "mlvae/optimizer.hpp"
#include "mlvae/rng.hpp"

namespace mlvae {

struct EvalConfig {
  // Evidence count behind the classifier's training features.
  std::size_t K = 10;
  // Test-time evidence counts, each in [1, K].
  std::vector<std::size_t> k_values = {1, 2, 5, 10};
  std::size_t classifier_hidden = 256;
  std::size_t classifier_epochs = 50;
  std::size_t batch_size = 64;
  AdamConfig optimizer;
  std::size_t interpolation_steps = 8;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument on k outside [1, K] or non-positive sizes.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Probe classifier: two relu layers and a softmax output.

struct ClassifierConfig {
  std::size_t hidden = 256;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  AdamConfig optimizer;
  std::uint64_t seed = 0;
};

struct ClassifierScore {
  double accuracy = 0.0;
  // Mean negative log probability of the true class, in nats.
  double conditional_entropy = 0.0;
};

class Classifier {
 public:
  static Classifier train(const Tensor& features, std::span<const std::size_t> labels, std::size_t classes,
                          const ClassifierConfig& config);

  // [rows, classes] log probabilities.
  Tensor log_probabilities(const Tensor& features) const;
  std::vector<std::size_t> predict(const Tensor& features) const;
  ClassifierScore score(const Tensor& features, std::span<const std::size_t> labels) const;

  std::size_t classes() const { return classes_; }

 private:
  std::size_t classes_ = 0;
  std::vector<Tensor> params_;
};

// ---------------------------------------------------------------------------
// Quantitative protocol.

struct MetricsRow {
  std::string feature_set;  // "style", "content" or "baseline-vae"
  std::size_t k = 0;
  double accuracy = 0.0;
  double conditional_entropy = 0.0;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;

  // Throws std::logic_error on accuracy outside [0,1] or negative entropy.
  void validate() const;
  const MetricsRow& at(const std::string& feature_set, std::size_t k) const;
};

void write_metrics_table_csv(const std::filesystem::path& path, const MetricsTable& table);

// Per-class halves of a labelled dataset: even positions of a seeded shuffle
// go to the classifier's training side, odd positions to its test side.
std::pair<GroupedDataset, GroupedDataset> classifier_split(const GroupedDataset& dataset, std::uint64_t seed);

// Content features with evidence accumulation: row i is the fused content
// posterior mean of observation i together with k - 1 other members of its
// group, drawn without replacement. k = 1 gives the observation's own mean.
Tensor accumulated_content_features(const EncodedBatch& encoded, const GroupedDataset& dataset, std::size_t k,
                                    CounterRng& rng);

// Classifiers on style and on content means, trained with K-image evidence
// and tested at every k in config.k_values. With a baseline model
// (d_style == 0) its latent means are fused the same way and reported as
// "baseline-vae". Classes are the dataset's groups.
MetricsTable disentanglement_eval(const ModelParams& model, const GroupedDataset& dataset, const EvalConfig& config,
                                  const ModelParams* baseline = nullptr);

// ---------------------------------------------------------------------------
// Qualitative protocol.

enum class CellRole { empty, input, reconstruction, swapped, interpolated, generated };

std::string to_string(CellRole role);

struct CellLatent {
  std::vector<double> content;
  std::vector<double> style;
};

struct ImageGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  ImageFormat format;
  std::vector<std::vector<float>> images;  // row-major cells; empty cells hold zeros
  std::vector<CellRole> roles;
  std::vector<CellLatent> latents;  // decoder inputs; empty for non-decoded cells
  std::vector<std::string> warnings;

  ImageGrid() = default;
  ImageGrid(std::size_t rows, std::size_t cols, ImageFormat format);

  std::vector<float>& image(std::size_t r, std::size_t c) { return images.at(r * cols + c); }
  const std::vector<float>& image(std::size_t r, std::size_t c) const { return images.at(r * cols + c); }
  CellRole& role(std::size_t r, std::size_t c) { return roles.at(r * cols + c); }
  CellRole role(std::size_t r, std::size_t c) const { return roles.at(r * cols + c); }
  CellLatent& latent(std::size_t r, std::size_t c) { return latents.at(r * cols + c); }
  const CellLatent& latent(std::size_t r, std::size_t c) const { return latents.at(r * cols + c); }

  // Throws std::logic_error unless every cell has format.pixels() values.
  void validate() const;
};

// (n+1) x (n+1): row 0 and column 0 hold the inputs (corner empty); cell
// (i, j) for i, j >= 1 decodes content of input j with style of input i, so
// the diagonal holds reconstructions. Content is the posterior mean fused
// over input j and its evidence set (none = the image alone); style is the
// per-image posterior mean.
ImageGrid swap_grid(const ModelParams& params, const Tensor& images,
                    std::span<const std::optional<Tensor>> evidence = {});

// steps x steps: row r fixes style (1-r/(s-1)) s_a + r/(s-1) s_b, column c
// interpolates content the same way. Latents are the posterior means.
ImageGrid interpolate(const ModelParams& params, std::span<const double> image_a, std::span<const double> image_b,
                      std::size_t steps);

// 1 x n_styles: the group's fused content mean decoded against styles drawn
// from the prior.
ImageGrid generate_for_group(const ModelParams& params, const Tensor& group, std::size_t n_styles, CounterRng& rng);

// n x 3: input, reconstruction from the image alone, reconstruction with
// content fused over the whole group. A singleton group adds a warning.
ImageGrid reconstruct_compare(const ModelParams& params, const Tensor& group);

// Binary P5 (one channel) or P6 (three channels), maxval 255, plus
// "<path>.roles.txt" listing every cell's role.
void write_grid(const ImageGrid& grid, const std::filesystem::path& path);

}  // namespace mlvae
