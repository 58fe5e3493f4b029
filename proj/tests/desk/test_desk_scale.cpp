#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mlvae/eval.hpp"
#include "mlvae/run_config.hpp"
#include "mlvae/training.hpp"

using namespace mlvae;

namespace {

// One training run on the bundled shapes configuration, shared by every test.
class ShapesRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    config_ = new RunConfig(load_run_config(std::string(MLVAE_SOURCE_DIR) + "/configs/shapes.json"));
    data_ = new RunData(load_run_data(*config_));
    Architecture arch = config_->model;
    arch.input_dim = data_->train.dim();
    result_ = new TrainResult(train(data_->train, data_->validation, arch, config_->train, {}));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete data_;
    delete config_;
  }

  static std::vector<double> objectives(const std::string& split) {
    std::vector<double> out;
    for (const auto& m : result_->metrics)
      if (m.split == split) out.push_back(m.objective.total);
    return out;
  }
  static const ModelParams& model() { return result_->checkpoint.params; }

  static RunConfig* config_;
  static RunData* data_;
  static TrainResult* result_;
};

RunConfig* ShapesRun::config_ = nullptr;
RunData* ShapesRun::data_ = nullptr;
TrainResult* ShapesRun::result_ = nullptr;

// Per-pixel intensity: the brightest channel.
std::vector<double> intensity(std::span<const float> hwc) {
  std::vector<double> out(hwc.size() / 3);
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = std::max({hwc[3 * p], hwc[3 * p + 1], hwc[3 * p + 2]});
  return out;
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

TEST_F(ShapesRun, ValidationObjectiveImprovesByAFifth) {
  const auto val = objectives("validation");
  ASSERT_EQ(val.size(), config_->train.epochs);
  const double improvement = (val.back() - val.front()) / std::abs(val.front());
  RecordProperty("validation_improvement", std::to_string(improvement));
  EXPECT_GE(improvement, 0.2) << "epoch 1 " << val.front() << ", last " << val.back();
}

TEST_F(ShapesRun, TrainingObjectiveMovingAverageRises) {
  const auto tr = objectives("train");
  ASSERT_GE(tr.size(), 10u);
  auto window = [&](std::size_t begin) {
    double s = 0.0;
    for (std::size_t i = begin; i < begin + 5; ++i) s += tr[i];
    return s / 5.0;
  };
  EXPECT_GT(window(tr.size() - 5), window(0));
}

TEST_F(ShapesRun, AccumulatedReconstructionsAreCloserToTheTemplate) {
  const auto& spec = config_->dataset.shapes;
  const double centre = static_cast<double>(spec.image_size) / 2.0;
  double single = 0.0, fused = 0.0;
  std::size_t count = 0;
  for (std::size_t g = 0; g < data_->eval.group_count(); ++g) {
    const auto members = data_->eval.groups()[g];
    const std::vector<std::size_t> first(members.begin(), members.begin() + 8);
    const auto grid = reconstruct_compare(model(), data_->eval.gather(first));
    const auto kind = shape_kind_from_string(data_->eval.group_labels()[g]);
    const auto tmpl = intensity(render_shape(kind, centre, centre, spec.base_radius, {1.0f, 1.0f, 1.0f}, spec.image_size));
    for (std::size_t r = 0; r < grid.rows; ++r, ++count) {
      single += distance(intensity(grid.image(r, 1)), tmpl);
      fused += distance(intensity(grid.image(r, 2)), tmpl);
    }
  }
  RecordProperty("template_distance_single", std::to_string(single / count));
  RecordProperty("template_distance_fused", std::to_string(fused / count));
  EXPECT_LE(fused / count, single / count);
}

TEST_F(ShapesRun, GenerationsKeepTheGroupShape) {
  const auto [clf_train, clf_test] = classifier_split(data_->eval, config_->eval.seed);
  CounterRng rng = CounterRng(config_->eval.seed).fork("generations");
  std::vector<std::size_t> all(clf_train.size());
  std::iota(all.begin(), all.end(), 0);
  const auto encoded = encode_batch(clf_train.gather(all), model());
  const Tensor features = accumulated_content_features(encoded, clf_train, config_->eval.K, rng);
  const auto labels = clf_train.membership();
  ClassifierConfig cc;
  cc.hidden = config_->eval.classifier_hidden;
  cc.epochs = config_->eval.classifier_epochs;
  cc.seed = config_->eval.seed;
  const auto classifier = Classifier::train(features, labels, clf_train.group_count(), cc);

  std::size_t correct = 0, total = 0;
  for (std::size_t g = 0; g < clf_test.group_count(); ++g) {
    const auto members = clf_test.groups()[g];
    const std::vector<std::size_t> evidence(members.begin(), members.begin() + config_->eval.K);
    const auto grid = generate_for_group(model(), clf_test.gather(evidence), 20, rng);
    Tensor generated({grid.cols, clf_test.dim()});
    for (std::size_t c = 0; c < grid.cols; ++c)
      for (std::size_t p = 0; p < clf_test.dim(); ++p) generated.at(c, p) = grid.image(0, c)[p];
    for (auto predicted : classifier.predict(encode_batch(generated, model()).content_mean)) {
      correct += predicted == g;
      ++total;
    }
  }
  const double rate = static_cast<double>(correct) / static_cast<double>(total);
  RecordProperty("generation_shape_rate", std::to_string(rate));
  EXPECT_GE(rate, 0.9);
}
