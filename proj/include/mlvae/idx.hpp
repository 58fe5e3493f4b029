#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "mlvae/dataset.hpp"

namespace mlvae {

class IdxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;
};

// IDX files: big-endian magic and extents, then unsigned bytes. Paths ending
// in ".gz" are read and written through zlib.
IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

// Groups are the label classes present, ordered by label value and named by
// the decimal label. Pixels are scaled by 1/255.
GroupedDataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

// Inverse of load_mnist_idx for single-channel datasets whose group labels are
// decimal byte values.
void write_mnist_idx(const GroupedDataset& dataset, const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path);

}  // namespace mlvae
