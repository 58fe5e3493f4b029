#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mlvae/rng.hpp"
#include "mlvae/tensor.hpp"

namespace mlvae {

class DatasetError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ImageFormat {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;

  std::size_t pixels() const { return width * height * channels; }
  friend bool operator==(const ImageFormat&, const ImageFormat&) = default;
};

// Flattened [0,1] images partitioned into disjoint, nonempty groups.
// Group labels are optional and only consumed by evaluation.
class GroupedDataset {
 public:
  GroupedDataset() = default;
  GroupedDataset(ImageFormat format, std::vector<float> pixels, std::vector<std::vector<std::size_t>> groups,
                 std::vector<std::string> group_labels = {});

  // Throws DatasetError unless groups partition [0, size()), every group is
  // nonempty, labels (if any) match the group count and pixels lie in [0,1].
  void validate() const;

  const ImageFormat& format() const { return format_; }
  std::size_t size() const { return format_.pixels() ? pixels_.size() / format_.pixels() : 0; }
  std::size_t dim() const { return format_.pixels(); }
  bool empty() const { return size() == 0; }

  const std::vector<std::vector<std::size_t>>& groups() const { return groups_; }
  std::size_t group_count() const { return groups_.size(); }
  const std::vector<std::string>& group_labels() const { return group_labels_; }
  bool has_labels() const { return !group_labels_.empty(); }
  const std::vector<float>& pixels() const { return pixels_; }

  std::span<const float> observation(std::size_t i) const;
  // Rows [indices.size(), dim()] in double precision.
  Tensor gather(std::span<const std::size_t> indices) const;
  Tensor group_tensor(std::size_t group) const { return gather(groups_.at(group)); }
  // Group index of every observation.
  std::vector<std::size_t> membership() const;

  // Observations at `indices` (in that order), regrouped by their original
  // groups; groups left empty are dropped.
  GroupedDataset subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const GroupedDataset&, const GroupedDataset&) = default;

 private:
  ImageFormat format_;
  std::vector<float> pixels_;
  std::vector<std::vector<std::size_t>> groups_;
  std::vector<std::string> group_labels_;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t validation = 0;
};

// Random disjoint split; each side is regrouped so the partition invariant
// holds within it. Index order inside each split follows the input order.
std::pair<GroupedDataset, GroupedDataset> split_dataset(const GroupedDataset& dataset, SplitCounts counts,
                                                        std::uint64_t seed);
std::pair<GroupedDataset, GroupedDataset> split_dataset(const GroupedDataset& dataset, double train_fraction,
                                                        std::uint64_t seed);
// The index sets behind split_dataset, for partition checks.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, SplitCounts counts,
                                                                            std::uint64_t seed);

// Manifest plus raw f32 image blob, same container as checkpoints.
void save_dataset(const GroupedDataset& dataset, const std::filesystem::path& dir);
GroupedDataset load_dataset(const std::filesystem::path& dir);

}  // namespace mlvae
