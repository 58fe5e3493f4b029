#include "mlvae/tensor_store.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mlvae {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string to_string(BlobDType d) { return d == BlobDType::f32 ? "f32" : "f64"; }

BlobDType blob_dtype_from_string(const std::string& s) {
  if (s == "f32") return BlobDType::f32;
  if (s == "f64") return BlobDType::f64;
  throw FormatError("unknown blob dtype '" + s + "'");
}

std::size_t element_bytes(BlobDType d) { return d == BlobDType::f32 ? 4 : 8; }

const Tensor& TensorArchive::get(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw FormatError("archive has no tensor named '" + name + "'");
}

namespace {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&v, bytes, sizeof(T));
  }
  return v;
}

void append_values(std::string& blob, const Tensor& t, BlobDType dtype) {
  for (double v : t.values()) {
    if (dtype == BlobDType::f64) {
      const double le = to_little(v);
      blob.append(reinterpret_cast<const char*>(&le), sizeof le);
    } else {
      const float le = to_little(static_cast<float>(v));
      blob.append(reinterpret_cast<const char*>(&le), sizeof le);
    }
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

void write_tensor_archive(const fs::path& dir, const TensorArchive& archive) {
  fs::create_directories(dir);
  std::string blob;
  ordered_json entries = ordered_json::array();
  for (const auto& t : archive.tensors) {
    const std::size_t offset = blob.size();
    append_values(blob, t.value, archive.dtype);
    entries.push_back({{"name", t.name},
                       {"shape", t.value.shape()},
                       {"offset", offset},
                       {"nbytes", blob.size() - offset}});
  }
  ordered_json manifest;
  manifest["format"] = "mlvae-tensor-archive";
  manifest["version"] = kArchiveVersion;
  manifest["byte_order"] = "little";
  manifest["dtype"] = to_string(archive.dtype);
  manifest["blob"] = kBlobName;
  manifest["blob_bytes"] = blob.size();
  manifest["tensors"] = std::move(entries);
  manifest["metadata"] = archive.metadata;

  std::ofstream blob_out(dir / kBlobName, std::ios::binary | std::ios::trunc);
  blob_out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  std::ofstream manifest_out(dir / kManifestName, std::ios::trunc);
  manifest_out << manifest.dump(2) << '\n';
  if (!blob_out || !manifest_out) throw FormatError("failed writing archive to " + dir.string());
}

TensorArchive read_tensor_archive(const fs::path& dir) {
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(read_file(dir / kManifestName));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  try {
    if (manifest.at("format").get<std::string>() != "mlvae-tensor-archive") {
      throw FormatError("manifest format tag is not mlvae-tensor-archive");
    }
    const int version = manifest.at("version").get<int>();
    if (version != kArchiveVersion) {
      throw FormatError("archive version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kArchiveVersion) + ")");
    }
    if (manifest.at("byte_order").get<std::string>() != "little") throw FormatError("blob must be little-endian");

    TensorArchive archive;
    archive.dtype = blob_dtype_from_string(manifest.at("dtype").get<std::string>());
    archive.metadata = manifest.value("metadata", ordered_json::object());
    const std::string blob = read_file(dir / manifest.at("blob").get<std::string>());
    const auto declared = manifest.at("blob_bytes").get<std::size_t>();
    if (blob.size() != declared) {
      throw FormatError("blob length mismatch: manifest declares " + std::to_string(declared) + " bytes, file has " +
                        std::to_string(blob.size()));
    }
    const std::size_t width = element_bytes(archive.dtype);
    for (const auto& entry : manifest.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto nbytes = entry.at("nbytes").get<std::size_t>();
      const std::size_t count = element_count(shape);
      if (nbytes != count * width) {
        throw FormatError("tensor '" + name + "' declares " + std::to_string(nbytes) + " bytes but shape " +
                          shape_to_string(shape) + " needs " + std::to_string(count * width));
      }
      if (offset > blob.size() || nbytes > blob.size() - offset) {
        throw FormatError("tensor '" + name + "' extends past the end of the blob (length " +
                          std::to_string(blob.size()) + ")");
      }
      Tensor value(shape);
      const char* src = blob.data() + offset;
      for (std::size_t i = 0; i < count; ++i) {
        if (archive.dtype == BlobDType::f64) {
          double v;
          std::memcpy(&v, src + i * 8, 8);
          value[i] = to_little(v);
        } else {
          float v;
          std::memcpy(&v, src + i * 4, 4);
          value[i] = static_cast<double>(to_little(v));
        }
      }
      archive.tensors.push_back({name, std::move(value)});
    }
    return archive;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest in " + dir.string() + ": " + e.what());
  }
}

}  // namespace mlvae
