#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlvae/dataset.hpp"
#include "mlvae/model.hpp"
#include "mlvae/optimizer.hpp"
#include "mlvae/rng.hpp"
#include "mlvae/tensor_store.hpp"

namespace mlvae {

inline constexpr std::size_t kUnlimitedGroupSize = 0;

struct TrainConfig {
  std::size_t groups_per_minibatch = 4;
  // Groups larger than this are subsampled; kUnlimitedGroupSize keeps them whole.
  std::size_t max_group_size = 8;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  AdamConfig optimizer;
  // Width of the floats written to checkpoints. Training itself is 64-bit.
  BlobDType precision = BlobDType::f64;

  void validate() const;
};

// Raised when the objective or its gradient stops being finite.
class TrainingDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SampledGroup {
  std::size_t group = 0;
  std::vector<std::size_t> members;
};

// groups_per_minibatch distinct groups drawn uniformly; members of groups over
// max_group_size are a uniform subsample of that size (sorted).
std::vector<SampledGroup> sample_group_minibatch(const GroupedDataset& dataset, const TrainConfig& config,
                                                 CounterRng& rng);

// Mean of the group ELBOs. noise[g] belongs to groups[g].
ElboBreakdown minibatch_objective(std::span<const Tensor> groups, const ModelParams& params,
                                  std::span<const ElboNoise> noise);
// Draws each group's noise in order from rng.
ElboBreakdown minibatch_objective(std::span<const Tensor> groups, const ModelParams& params, CounterRng& rng);

// Splits every group into disjoint random chunks of at most max_group_size
// members with sizes differing by at most one. The chunk list comes back shuffled.
std::vector<SampledGroup> epoch_chunks(const GroupedDataset& dataset, std::size_t max_group_size, CounterRng& rng);

struct Checkpoint {
  ModelParams params;
  OptimizerState optimizer;
  AdamConfig adam;
  std::uint64_t epoch = 0;
  std::string config_fingerprint;
  CounterRng rng;
  BlobDType precision = BlobDType::f64;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  std::string split;
  ElboBreakdown objective;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochMetrics> metrics;
};

struct TrainOptions {
  std::string config_fingerprint;
  std::function<void(const EpochMetrics&)> on_epoch;
};

// Epoch: the training groups are cut into chunks (epoch_chunks), shuffled,
// and consumed groups_per_minibatch chunks per Adam step on the negated
// minibatch objective. After every epoch the mean objective is reported for
// "train" (running average over the epoch) and, when the validation set is
// nonempty, "validation" (fixed chunks, fixed noise).
TrainResult train(const GroupedDataset& train_set, const GroupedDataset& validation_set, const Architecture& arch,
                  const TrainConfig& config, const TrainOptions& options = {});

// Fixed-chunk, fixed-noise objective of a whole dataset.
ElboBreakdown dataset_objective(const GroupedDataset& dataset, const ModelParams& params, std::size_t max_group_size,
                                std::uint64_t seed);

void write_metrics_csv(const std::filesystem::path& path, std::span<const EpochMetrics> metrics);

nlohmann::ordered_json architecture_to_json(const Architecture& arch);
Architecture architecture_from_json(const nlohmann::ordered_json& j);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);
// Also checks that the stored architecture and every parameter shape match `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& dir, const Architecture& expected);

}  // namespace mlvae
