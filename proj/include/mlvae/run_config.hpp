#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "mlvae/eval.hpp"
#include "mlvae/model.hpp"
#include "mlvae/shapes.hpp"
#include "mlvae/training.hpp"

namespace mlvae {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DatasetKind { shapes, mnist };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::shapes;
  // shapes
  ShapesSpec shapes;
  std::size_t eval_samples_per_group = 100;
  double validation_fraction = 0.1;
  // mnist
  std::filesystem::path images;
  std::filesystem::path labels;
  std::size_t train_count = 0;
  std::size_t validation_count = 0;
};

struct ManipulateConfig {
  std::size_t swap_count = 4;
  // Other members of an input's group fused into its content (0: none).
  std::size_t swap_evidence = 10;
  std::size_t n_styles = 8;
  std::size_t compare_group_size = 8;
};

// One run: where the data comes from, the model, training, evaluation and
// output location. Every random choice derives from `seed`.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  DatasetConfig dataset;
  Architecture model;  // input_dim is filled in from the dataset
  TrainConfig train;
  EvalConfig eval;
  bool baseline_vae = false;
  ManipulateConfig manipulate;

  // The effective configuration, defaults included, as written next to outputs.
  nlohmann::ordered_json resolved;

  // Hex digest of the sections that determine training (seed, dataset,
  // model, train).
  std::string fingerprint() const;
};

struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
};

// Relative paths inside the document resolve against `base_dir`. Unknown
// keys, missing required fields and type errors raise ConfigError naming the
// key and, where it can be located, its line.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir,
                           const ConfigOverrides& overrides = {}, const std::string& source = "config");
RunConfig load_run_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

struct RunData {
  GroupedDataset train;
  GroupedDataset validation;
  GroupedDataset eval;
};

// Shapes: a fresh draw for training (split into train/validation) and a
// disjoint draw, from a derived seed, for evaluation. MNIST: one random
// split of the files into train, validation and the remaining eval images.
RunData load_run_data(const RunConfig& config);

}  // namespace mlvae
