#include "mlvae/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mlvae/tensor_store.hpp"

namespace mlvae {

GroupedDataset::GroupedDataset(ImageFormat format, std::vector<float> pixels,
                               std::vector<std::vector<std::size_t>> groups, std::vector<std::string> group_labels)
    : format_(format), pixels_(std::move(pixels)), groups_(std::move(groups)), group_labels_(std::move(group_labels)) {
  validate();
}

void GroupedDataset::validate() const {
  const std::size_t d = format_.pixels();
  if (d == 0) throw DatasetError("dataset: image format has zero pixels");
  if (pixels_.size() % d != 0) throw DatasetError("dataset: pixel buffer is not a whole number of images");
  const std::size_t n = pixels_.size() / d;
  std::vector<char> seen(n, 0);
  std::size_t covered = 0;
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    if (groups_[g].empty()) throw DatasetError("dataset: group " + std::to_string(g) + " is empty");
    for (std::size_t i : groups_[g]) {
      if (i >= n) throw DatasetError("dataset: group " + std::to_string(g) + " references observation " +
                                     std::to_string(i) + " of " + std::to_string(n));
      if (seen[i]) throw DatasetError("dataset: observation " + std::to_string(i) + " belongs to two groups");
      seen[i] = 1;
      ++covered;
    }
  }
  if (covered != n) throw DatasetError("dataset: groups cover " + std::to_string(covered) + " of " +
                                       std::to_string(n) + " observations");
  if (!group_labels_.empty() && group_labels_.size() != groups_.size()) {
    throw DatasetError("dataset: label count does not match group count");
  }
  for (float v : pixels_) {
    if (!(v >= 0.0f && v <= 1.0f)) throw DatasetError("dataset: pixel value outside [0, 1]");
  }
}

std::span<const float> GroupedDataset::observation(std::size_t i) const {
  if (i >= size()) throw std::out_of_range("observation index out of range");
  return std::span<const float>(pixels_).subspan(i * dim(), dim());
}

Tensor GroupedDataset::gather(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw DatasetError("gather: no indices");
  Tensor out({indices.size(), dim()});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto obs = observation(indices[r]);
    std::copy(obs.begin(), obs.end(), out.data() + r * dim());
  }
  return out;
}

std::vector<std::size_t> GroupedDataset::membership() const {
  std::vector<std::size_t> out(size());
  for (std::size_t g = 0; g < groups_.size(); ++g)
    for (std::size_t i : groups_[g]) out[i] = g;
  return out;
}

GroupedDataset GroupedDataset::subset(std::span<const std::size_t> indices) const {
  const auto owner = membership();
  std::vector<float> pixels;
  pixels.reserve(indices.size() * dim());
  std::vector<std::vector<std::size_t>> regrouped(groups_.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto obs = observation(indices[k]);
    pixels.insert(pixels.end(), obs.begin(), obs.end());
    regrouped[owner[indices[k]]].push_back(k);
  }
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::string> labels;
  for (std::size_t g = 0; g < regrouped.size(); ++g) {
    if (regrouped[g].empty()) continue;
    groups.push_back(std::move(regrouped[g]));
    if (has_labels()) labels.push_back(group_labels_[g]);
  }
  return GroupedDataset(format_, std::move(pixels), std::move(groups), std::move(labels));
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, SplitCounts counts,
                                                                            std::uint64_t seed) {
  if (counts.train > n || counts.validation > n - counts.train) {
    throw DatasetError("split: requested " + std::to_string(counts.train) + " + " +
                       std::to_string(counts.validation) + " observations from " + std::to_string(n));
  }
  CounterRng rng = CounterRng(seed).fork("split");
  auto order = sample_without_replacement(n, counts.train + counts.validation, rng);
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(counts.train));
  std::vector<std::size_t> validation(order.begin() + static_cast<std::ptrdiff_t>(counts.train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(validation.begin(), validation.end());
  return {std::move(train), std::move(validation)};
}

std::pair<GroupedDataset, GroupedDataset> split_dataset(const GroupedDataset& dataset, SplitCounts counts,
                                                        std::uint64_t seed) {
  auto [train, validation] = split_indices(dataset.size(), counts, seed);
  return {dataset.subset(train), dataset.subset(validation)};
}

std::pair<GroupedDataset, GroupedDataset> split_dataset(const GroupedDataset& dataset, double train_fraction,
                                                        std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) throw DatasetError("split: fraction must lie in [0, 1]");
  const auto n = dataset.size();
  const auto train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  return split_dataset(dataset, SplitCounts{train, n - train}, seed);
}

void save_dataset(const GroupedDataset& dataset, const std::filesystem::path& dir) {
  TensorArchive archive;
  archive.dtype = BlobDType::f32;
  archive.metadata["kind"] = "grouped-dataset";
  archive.metadata["width"] = dataset.format().width;
  archive.metadata["height"] = dataset.format().height;
  archive.metadata["channels"] = dataset.format().channels;
  archive.metadata["groups"] = dataset.groups();
  archive.metadata["group_labels"] = dataset.group_labels();
  if (!dataset.empty()) {
    Tensor images({dataset.size(), dataset.dim()});
    std::copy(dataset.pixels().begin(), dataset.pixels().end(), images.data());
    archive.tensors.push_back({"images", std::move(images)});
  }
  write_tensor_archive(dir, archive);
}

GroupedDataset load_dataset(const std::filesystem::path& dir) {
  const auto archive = read_tensor_archive(dir);
  try {
    const auto& meta = archive.metadata;
    if (meta.at("kind").get<std::string>() != "grouped-dataset") throw FormatError("archive is not a dataset");
    ImageFormat format{meta.at("width").get<std::size_t>(), meta.at("height").get<std::size_t>(),
                       meta.at("channels").get<std::size_t>()};
    std::vector<float> pixels;
    if (!archive.tensors.empty()) {
      const Tensor& images = archive.get("images");
      if (images.cols() != format.pixels()) throw FormatError("dataset image width does not match its format");
      pixels.assign(images.values().begin(), images.values().end());
    }
    return GroupedDataset(format, std::move(pixels), meta.at("groups").get<std::vector<std::vector<std::size_t>>>(),
                          meta.at("group_labels").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed dataset manifest: ") + e.what());
  }
}

}  // namespace mlvae
