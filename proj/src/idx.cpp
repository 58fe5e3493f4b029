#include "mlvae/idx.hpp"

#include <zlib.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace mlvae {

namespace {

bool is_gzip(const std::filesystem::path& path) { return path.extension() == ".gz"; }

std::string read_bytes(const std::filesystem::path& path) {
  if (is_gzip(path)) {
    gzFile file = gzopen(path.string().c_str(), "rb");
    if (!file) throw IdxError("cannot open " + path.string());
    std::string out;
    char buf[1 << 16];
    int n;
    while ((n = gzread(file, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
    const bool failed = n < 0;
    gzclose(file);
    if (failed) throw IdxError("truncated or corrupt gzip stream in " + path.string());
    return out;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  if (is_gzip(path)) {
    gzFile file = gzopen(path.string().c_str(), "wb9");
    if (!file) throw IdxError("cannot create " + path.string());
    const int written = gzwrite(file, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(file);
    if (written != static_cast<int>(bytes.size())) throw IdxError("failed writing " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IdxError("failed writing " + path.string());
}

std::uint32_t read_be32(const std::string& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) throw IdxError("truncated header in " + path.string());
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<std::uint8_t>(bytes[offset + i]);
  return v;
}

void append_be32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

void check_magic(std::uint32_t magic, std::uint32_t expected, const std::filesystem::path& path) {
  if (magic != expected) {
    std::ostringstream msg;
    msg << "bad magic number 0x" << std::hex << magic << " in " << path.string() << " (expected 0x" << expected << ")";
    throw IdxError(msg.str());
  }
}

}  // namespace

IdxImages read_idx_images(const std::filesystem::path& path) {
  const std::string bytes = read_bytes(path);
  check_magic(read_be32(bytes, 0, path), kIdxImagesMagic, path);
  IdxImages images;
  images.count = read_be32(bytes, 4, path);
  images.rows = read_be32(bytes, 8, path);
  images.cols = read_be32(bytes, 12, path);
  const std::size_t expected = static_cast<std::size_t>(images.count) * images.rows * images.cols;
  if (bytes.size() - 16 < expected) {
    throw IdxError("truncated image data in " + path.string() + ": header declares " + std::to_string(expected) +
                   " bytes, file holds " + std::to_string(bytes.size() - 16));
  }
  images.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(expected));
  return images;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const std::string bytes = read_bytes(path);
  check_magic(read_be32(bytes, 0, path), kIdxLabelsMagic, path);
  const std::size_t count = read_be32(bytes, 4, path);
  if (bytes.size() - 8 < count) {
    throw IdxError("truncated label data in " + path.string() + ": header declares " + std::to_string(count) +
                   " labels, file holds " + std::to_string(bytes.size() - 8));
  }
  return std::vector<std::uint8_t>(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count));
}

void write_idx_images(const std::filesystem::path& path, const IdxImages& images) {
  if (images.pixels.size() != static_cast<std::size_t>(images.count) * images.rows * images.cols) {
    throw IdxError("write_idx_images: pixel count does not match header");
  }
  std::string out;
  append_be32(out, kIdxImagesMagic);
  append_be32(out, images.count);
  append_be32(out, images.rows);
  append_be32(out, images.cols);
  out.append(images.pixels.begin(), images.pixels.end());
  write_bytes(path, out);
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  std::string out;
  append_be32(out, kIdxLabelsMagic);
  append_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.append(labels.begin(), labels.end());
  write_bytes(path, out);
}

GroupedDataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto images = read_idx_images(images_path);
  const auto labels = read_idx_labels(labels_path);
  if (labels.size() != images.count) {
    throw IdxError("count mismatch: " + std::to_string(images.count) + " images but " +
                   std::to_string(labels.size()) + " labels");
  }
  std::vector<float> pixels(images.pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<float>(images.pixels[i]) / 255.0f;

  std::map<std::uint8_t, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(i);
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::string> names;
  for (auto& [label, members] : by_label) {
    names.push_back(std::to_string(label));
    groups.push_back(std::move(members));
  }
  return GroupedDataset(ImageFormat{images.cols, images.rows, 1}, std::move(pixels), std::move(groups),
                        std::move(names));
}

void write_mnist_idx(const GroupedDataset& dataset, const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path) {
  if (dataset.format().channels != 1) throw IdxError("IDX export needs single-channel images");
  if (!dataset.has_labels()) throw IdxError("IDX export needs group labels");
  IdxImages images;
  images.count = static_cast<std::uint32_t>(dataset.size());
  images.rows = static_cast<std::uint32_t>(dataset.format().height);
  images.cols = static_cast<std::uint32_t>(dataset.format().width);
  images.pixels.resize(dataset.pixels().size());
  for (std::size_t i = 0; i < images.pixels.size(); ++i) {
    images.pixels[i] = static_cast<std::uint8_t>(std::lround(dataset.pixels()[i] * 255.0f));
  }
  std::vector<std::uint8_t> labels(dataset.size());
  for (std::size_t g = 0; g < dataset.group_count(); ++g) {
    const int value = std::stoi(dataset.group_labels()[g]);
    if (value < 0 || value > 255) throw IdxError("label out of byte range: " + dataset.group_labels()[g]);
    for (std::size_t i : dataset.groups()[g]) labels[i] = static_cast<std::uint8_t>(value);
  }
  write_idx_images(images_path, images);
  write_idx_labels(labels_path, labels);
}

}  // namespace mlvae
