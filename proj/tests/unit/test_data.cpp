#include <gtest/gtest.h>

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "mlvae/dataset.hpp"
#include "mlvae/idx.hpp"
#include "mlvae/shapes.hpp"
#include "mlvae/tensor_store.hpp"

namespace fs = std::filesystem;
using namespace mlvae;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mlvae_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Two 2x3 images with labels 7 and 3.
std::vector<unsigned char> fixture_images() {
  return {0x00, 0x00, 0x08, 0x03,  //
          0x00, 0x00, 0x00, 0x02,  //
          0x00, 0x00, 0x00, 0x02,  //
          0x00, 0x00, 0x00, 0x03,  //
          0,    51,   102,  153,  204, 255,  //
          255,  0,    17,   34,   68,  136};
}

std::vector<unsigned char> fixture_labels() { return {0x00, 0x00, 0x08, 0x01, 0x00, 0x00, 0x00, 0x02, 7, 3}; }

void check_partition(const GroupedDataset& ds) {
  std::vector<int> hits(ds.size(), 0);
  for (const auto& g : ds.groups()) {
    EXPECT_FALSE(g.empty());
    for (auto i : g) ++hits.at(i);
  }
  for (int h : hits) EXPECT_EQ(h, 1);
}

ShapesSpec small_spec() {
  ShapesSpec spec;
  spec.image_size = 16;
  spec.base_radius = 4.0;
  spec.position_jitter = 2.0;
  spec.scale_jitter = 0.2;
  spec.samples_per_group = 10;
  spec.seed = 11;
  return spec;
}

}  // namespace

TEST(Shapes, CountsFollowInventory) {
  ShapesSpec spec;
  spec.samples_per_group = 50;
  const auto ds = generate_shapes_dataset(spec);
  EXPECT_EQ(ds.size(), 100u);
  ASSERT_EQ(ds.group_count(), 2u);
  EXPECT_EQ(ds.groups()[0].size(), 50u);
  EXPECT_EQ(ds.groups()[1].size(), 50u);
  EXPECT_EQ(ds.group_labels(), (std::vector<std::string>{"circle", "star"}));
  EXPECT_EQ(ds.format(), (ImageFormat{32, 32, 3}));
  check_partition(ds);
}

TEST(Shapes, ZeroJitterSingleColorGivesIdenticalMembers) {
  ShapesSpec spec = small_spec();
  spec.position_jitter = 0.0;
  spec.scale_jitter = 0.0;
  spec.colors = {{"green", {0.0f, 1.0f, 0.0f}}};
  const auto ds = generate_shapes_dataset(spec);
  for (const auto& g : ds.groups()) {
    const auto first = ds.observation(g.front());
    for (auto i : g) {
      const auto obs = ds.observation(i);
      EXPECT_TRUE(std::equal(first.begin(), first.end(), obs.begin()));
    }
  }
  const auto a = ds.observation(ds.groups()[0].front());
  const auto b = ds.observation(ds.groups()[1].front());
  EXPECT_FALSE(std::equal(a.begin(), a.end(), b.begin()));
}

TEST(Shapes, CircleMatchesScanlineRasterization) {
  const double cx = 15.3, cy = 16.7, r = 7.2;
  const std::size_t n = 32;
  const auto image = render_shape(ShapeKind::circle, cx, cy, r, {0.25f, 0.5f, 1.0f}, n);
  std::size_t lit = 0;
  for (std::size_t y = 0; y < n; ++y) {
    // Horizontal chord of the circle at this pixel row's centre line.
    const double dy = static_cast<double>(y) + 0.5 - cy;
    const double half = std::abs(dy) <= r ? std::sqrt(r * r - dy * dy) : -1.0;
    for (std::size_t x = 0; x < n; ++x) {
      const bool expected = half >= 0.0 && std::abs(static_cast<double>(x) + 0.5 - cx) <= half;
      const float* px = image.data() + (y * n + x) * 3;
      if (expected) {
        ++lit;
        EXPECT_EQ(px[0], 0.25f);
        EXPECT_EQ(px[1], 0.5f);
        EXPECT_EQ(px[2], 1.0f);
      } else {
        EXPECT_EQ(px[0] + px[1] + px[2], 0.0f) << "pixel " << x << "," << y;
      }
    }
  }
  // Lattice count tracks the disc area.
  EXPECT_NEAR(static_cast<double>(lit), std::numbers::pi * r * r, 0.1 * std::numbers::pi * r * r);
}

TEST(Shapes, OtherShapesStayInsideTheirRadius) {
  for (auto kind : {ShapeKind::star, ShapeKind::triangle, ShapeKind::square}) {
    const auto image = render_shape(kind, 16.0, 16.0, 8.0, {1.0f, 1.0f, 1.0f}, 32);
    std::size_t lit = 0;
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x)
        if (image[(y * 32 + x) * 3] > 0.0f) {
          ++lit;
          EXPECT_LE(std::hypot(x + 0.5 - 16.0, y + 0.5 - 16.0), 8.0 + 1e-12) << to_string(kind);
        }
    EXPECT_GT(lit, 20u) << to_string(kind);
  }
}

TEST(Shapes, GenerationIsDeterministicPerSeed) {
  const auto a = generate_shapes_dataset(small_spec());
  const auto b = generate_shapes_dataset(small_spec());
  EXPECT_EQ(a, b);
  auto spec = small_spec();
  spec.seed = 12;
  EXPECT_NE(generate_shapes_dataset(spec).pixels(), a.pixels());
}

TEST(Shapes, GroupByColorPreset) {
  auto spec = small_spec();
  spec.group_by = GroupBy::color;
  const auto ds = generate_shapes_dataset(spec);
  ASSERT_EQ(ds.group_count(), 3u);
  EXPECT_EQ(ds.group_labels(), (std::vector<std::string>{"green", "yellow", "blue"}));
  // Every lit pixel of a member carries the group's colour.
  const std::array<std::array<float, 3>, 3> rgb = {{{0, 1, 0}, {1, 1, 0}, {0, 0, 1}}};
  for (std::size_t g = 0; g < 3; ++g)
    for (auto i : ds.groups()[g]) {
      const auto obs = ds.observation(i);
      for (std::size_t p = 0; p < obs.size(); p += 3)
        if (obs[p] + obs[p + 1] + obs[p + 2] > 0.0f) {
          EXPECT_EQ(obs[p], rgb[g][0]);
          EXPECT_EQ(obs[p + 1], rgb[g][1]);
          EXPECT_EQ(obs[p + 2], rgb[g][2]);
        }
    }
  check_partition(ds);
}

TEST(Shapes, SpecErrors) {
  auto spec = small_spec();
  spec.shapes.clear();
  EXPECT_THROW(generate_shapes_dataset(spec), DatasetError);
  spec = small_spec();
  spec.colors.clear();
  EXPECT_THROW(generate_shapes_dataset(spec), DatasetError);
  spec = small_spec();
  spec.position_jitter = 5.0;  // 4*1.2 + 5 > 8
  EXPECT_THROW(generate_shapes_dataset(spec), DatasetError);
  EXPECT_THROW(shape_kind_from_string("hexagon"), DatasetError);
}

TEST(Idx, HandCraftedFixtureDecodesExactly) {
  const auto dir = scratch_dir("fixture");
  write_file(dir / "images", fixture_images());
  write_file(dir / "labels", fixture_labels());
  const auto ds = load_mnist_idx(dir / "images", dir / "labels");
  EXPECT_EQ(ds.format(), (ImageFormat{3, 2, 1}));
  ASSERT_EQ(ds.size(), 2u);
  // Groups are ordered by label value: "3" then "7".
  EXPECT_EQ(ds.group_labels(), (std::vector<std::string>{"3", "7"}));
  EXPECT_EQ(ds.groups()[0], (std::vector<std::size_t>{1}));
  EXPECT_EQ(ds.groups()[1], (std::vector<std::size_t>{0}));
  const std::vector<float> first = {0.0f, 0.2f, 0.4f, 0.6f, 0.8f, 1.0f};
  const std::vector<float> second = {1.0f, 0.0f, 17.0f / 255, 34.0f / 255, 68.0f / 255, 136.0f / 255};
  const auto a = ds.observation(0);
  const auto b = ds.observation(1);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_FLOAT_EQ(a[i], first[i]);
    EXPECT_FLOAT_EQ(b[i], second[i]);
  }
}

TEST(Idx, GzipFilesReadTheSame) {
  const auto dir = scratch_dir("gzip");
  for (auto [name, bytes] : {std::pair{"images.gz", fixture_images()}, std::pair{"labels.gz", fixture_labels()}}) {
    gzFile f = gzopen((dir / name).string().c_str(), "wb");
    gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
  }
  write_file(dir / "images", fixture_images());
  write_file(dir / "labels", fixture_labels());
  EXPECT_EQ(load_mnist_idx(dir / "images.gz", dir / "labels.gz"), load_mnist_idx(dir / "images", dir / "labels"));
}

TEST(Idx, RejectsBadMagic) {
  const auto dir = scratch_dir("magic");
  auto images = fixture_images();
  images[3] = 0x01;
  write_file(dir / "images", images);
  write_file(dir / "labels", fixture_labels());
  try {
    load_mnist_idx(dir / "images", dir / "labels");
    FAIL() << "expected IdxError";
  } catch (const IdxError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
  // Labels file passed as images.
  EXPECT_THROW(load_mnist_idx(dir / "labels", dir / "labels"), IdxError);
}

TEST(Idx, RejectsCountMismatch) {
  const auto dir = scratch_dir("count");
  auto labels = fixture_labels();
  labels[7] = 1;
  labels.pop_back();
  write_file(dir / "images", fixture_images());
  write_file(dir / "labels", labels);
  try {
    load_mnist_idx(dir / "images", dir / "labels");
    FAIL() << "expected IdxError";
  } catch (const IdxError& e) {
    EXPECT_NE(std::string(e.what()).find("count mismatch"), std::string::npos);
  }
}

TEST(Idx, RejectsTruncation) {
  const auto dir = scratch_dir("trunc");
  auto images = fixture_images();
  images.pop_back();
  write_file(dir / "images", images);
  write_file(dir / "labels", fixture_labels());
  EXPECT_THROW(load_mnist_idx(dir / "images", dir / "labels"), IdxError);
  write_file(dir / "short", {0x00, 0x00, 0x08});
  EXPECT_THROW(read_idx_images(dir / "short"), IdxError);
  EXPECT_THROW(read_idx_images(dir / "missing"), IdxError);
}

TEST(Idx, WriteThenLoadIsIdentity) {
  const auto dir = scratch_dir("roundtrip");
  write_file(dir / "images", fixture_images());
  write_file(dir / "labels", fixture_labels());
  const auto ds = load_mnist_idx(dir / "images", dir / "labels");
  write_mnist_idx(ds, dir / "again.gz", dir / "again-labels");
  EXPECT_EQ(load_mnist_idx(dir / "again.gz", dir / "again-labels"), ds);
  write_mnist_idx(ds, dir / "plain", dir / "plain-labels");
  EXPECT_EQ(read_file(dir / "plain"), fixture_images());
  EXPECT_EQ(read_file(dir / "plain-labels"), fixture_labels());
}

TEST(Idx, BundledSubsetLoads) {
  const fs::path root = MLVAE_SOURCE_DIR;
  const auto ds = load_mnist_idx(root / "data/mnist-5k/images-idx3-ubyte.gz", root / "data/mnist-5k/labels-idx1-ubyte.gz");
  EXPECT_EQ(ds.size(), 5000u);
  EXPECT_EQ(ds.group_count(), 10u);
  EXPECT_EQ(ds.format(), (ImageFormat{28, 28, 1}));
  std::size_t total = 0;
  for (const auto& g : ds.groups()) total += g.size();
  EXPECT_EQ(total, 5000u);
  check_partition(ds);
}

TEST(Dataset, ValidateRejectsBrokenPartitions) {
  const ImageFormat fmt{1, 1, 1};
  EXPECT_THROW(GroupedDataset(fmt, {0.1f, 0.2f}, {{0}, {}}), DatasetError);
  EXPECT_THROW(GroupedDataset(fmt, {0.1f, 0.2f}, {{0, 1}, {1}}), DatasetError);
  EXPECT_THROW(GroupedDataset(fmt, {0.1f, 0.2f}, {{0}}), DatasetError);
  EXPECT_THROW(GroupedDataset(fmt, {0.1f, 0.2f}, {{0}, {2}}), DatasetError);
  EXPECT_THROW(GroupedDataset(fmt, {0.1f, 1.5f}, {{0}, {1}}), DatasetError);
  EXPECT_THROW(GroupedDataset(fmt, {0.1f, 0.2f}, {{0}, {1}}, {"only-one"}), DatasetError);
  EXPECT_NO_THROW(GroupedDataset(fmt, {0.1f, 0.2f}, {{1}, {0}}, {"a", "b"}));
}

TEST(Split, PartitionsIndices) {
  for (std::uint64_t seed : {0u, 1u, 99u}) {
    const auto [train, val] = split_indices(100, {70, 30}, seed);
    EXPECT_EQ(train.size(), 70u);
    EXPECT_EQ(val.size(), 30u);
    std::set<std::size_t> all(train.begin(), train.end());
    for (auto i : val) EXPECT_TRUE(all.insert(i).second) << "index in both splits";
    EXPECT_EQ(all.size(), 100u);
    EXPECT_EQ(*all.rbegin(), 99u);
  }
}

TEST(Split, RegroupsEachSide) {
  const auto ds = generate_shapes_dataset(small_spec());
  const auto [train, val] = split_dataset(ds, SplitCounts{15, 5}, 3);
  EXPECT_EQ(train.size(), 15u);
  EXPECT_EQ(val.size(), 5u);
  check_partition(train);
  check_partition(val);
  // Each observation keeps its original group label.
  const auto [ti, vi] = split_indices(ds.size(), {15, 5}, 3);
  const auto owner = ds.membership();
  const auto train_owner = train.membership();
  for (std::size_t k = 0; k < ti.size(); ++k) {
    EXPECT_EQ(train.group_labels()[train_owner[k]], ds.group_labels()[owner[ti[k]]]);
    const auto a = train.observation(k);
    const auto b = ds.observation(ti[k]);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
  }
}

TEST(Split, FractionOneKeepsEverything) {
  const auto ds = generate_shapes_dataset(small_spec());
  const auto [train, val] = split_dataset(ds, 1.0, 5);
  EXPECT_EQ(train, ds);
  EXPECT_TRUE(val.empty());
  EXPECT_EQ(val.group_count(), 0u);
}

TEST(Split, DeterministicAndErrors) {
  const auto ds = generate_shapes_dataset(small_spec());
  EXPECT_EQ(split_dataset(ds, 0.8, 4), split_dataset(ds, 0.8, 4));
  EXPECT_NE(split_dataset(ds, 0.8, 4).first, split_dataset(ds, 0.8, 5).first);
  EXPECT_THROW(split_dataset(ds, SplitCounts{15, 6}, 0), DatasetError);
  EXPECT_THROW(split_dataset(ds, SplitCounts{21, 0}, 0), DatasetError);
  EXPECT_THROW(split_dataset(ds, 1.5, 0), DatasetError);
}

TEST(Dataset, SaveLoadRoundTrip) {
  const auto dir = scratch_dir("save");
  const auto ds = generate_shapes_dataset(small_spec());
  save_dataset(ds, dir / "shapes");
  EXPECT_EQ(load_dataset(dir / "shapes"), ds);
  const auto manifest = nlohmann::json::parse(std::ifstream(dir / "shapes" / kManifestName));
  EXPECT_EQ(manifest.at("dtype"), "f32");
}

TEST(TensorArchive, RoundTripAndCorruption) {
  const auto dir = scratch_dir("archive");
  TensorArchive archive;
  archive.metadata["note"] = "x";
  archive.tensors.push_back({"a", Tensor::matrix(2, 2, {1.0, 2.0, 3.0, 4.0})});
  archive.tensors.push_back({"b", Tensor::vector({0.1, -0.2, 1e-300})});
  write_tensor_archive(dir / "ok", archive);
  const auto back = read_tensor_archive(dir / "ok");
  ASSERT_EQ(back.tensors.size(), 2u);
  EXPECT_EQ(back.get("a"), archive.tensors[0].value);
  EXPECT_EQ(back.get("b"), archive.tensors[1].value);
  EXPECT_EQ(back.metadata, archive.metadata);
  EXPECT_THROW(back.get("c"), FormatError);

  auto blob = read_file(dir / "ok" / kBlobName);
  blob.pop_back();
  write_file(dir / "ok" / kBlobName, blob);
  try {
    read_tensor_archive(dir / "ok");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("bytes"), std::string::npos) << e.what();
  }
}
