#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mlvae/tensor.hpp"

namespace mlvae {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BlobDType { f32, f64 };

std::string to_string(BlobDType d);
BlobDType blob_dtype_from_string(const std::string& s);
std::size_t element_bytes(BlobDType d);

struct NamedTensor {
  std::string name;
  Tensor value;
};

// On disk: <dir>/manifest.json and <dir>/tensors.bin. The manifest carries
// the format tag and version, the blob element type, and per tensor its
// name, shape, byte offset and byte length; `metadata` rides along verbatim.
// The blob is little-endian and tensors are packed back to back.
struct TensorArchive {
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
  BlobDType dtype = BlobDType::f64;
  std::vector<NamedTensor> tensors;

  const Tensor& get(const std::string& name) const;
};

inline constexpr int kArchiveVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kBlobName = "tensors.bin";

void write_tensor_archive(const std::filesystem::path& dir, const TensorArchive& archive);
TensorArchive read_tensor_archive(const std::filesystem::path& dir);

}  // namespace mlvae
