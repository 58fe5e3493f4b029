#include "mlvae/training.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mlvae/ops.hpp"

namespace mlvae {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (groups_per_minibatch == 0) throw std::invalid_argument("train: groups_per_minibatch must be positive");
  optimizer.validate();
}

std::vector<SampledGroup> sample_group_minibatch(const GroupedDataset& dataset, const TrainConfig& config,
                                                 CounterRng& rng) {
  if (dataset.empty()) throw std::invalid_argument("sample_group_minibatch: dataset is empty");
  if (config.groups_per_minibatch == 0) throw std::invalid_argument("sample_group_minibatch: no groups requested");
  if (dataset.group_count() < config.groups_per_minibatch) {
    throw std::invalid_argument("sample_group_minibatch: requested " + std::to_string(config.groups_per_minibatch) +
                                " groups from a dataset with " + std::to_string(dataset.group_count()));
  }
  const auto chosen = sample_without_replacement(dataset.group_count(), config.groups_per_minibatch, rng);
  std::vector<SampledGroup> out;
  out.reserve(chosen.size());
  for (std::size_t g : chosen) {
    const auto& members = dataset.groups()[g];
    SampledGroup sampled{g, members};
    if (config.max_group_size != kUnlimitedGroupSize && members.size() > config.max_group_size) {
      const auto pick = sample_without_replacement(members.size(), config.max_group_size, rng);
      sampled.members.clear();
      for (std::size_t k : pick) sampled.members.push_back(members[k]);
      std::sort(sampled.members.begin(), sampled.members.end());
    }
    out.push_back(std::move(sampled));
  }
  return out;
}

namespace {

ElboBreakdown mean_of(const ElboVars& terms) {
  const double g = static_cast<double>(terms.total.value().size());
  ElboBreakdown out;
  for (double v : terms.reconstruction.value().values()) out.reconstruction += v;
  for (double v : terms.style_kl.value().values()) out.style_kl += v;
  for (double v : terms.content_kl.value().values()) out.content_kl += v;
  for (double v : terms.total.value().values()) out.total += v;
  out.reconstruction /= g;
  out.style_kl /= g;
  out.content_kl /= g;
  out.total /= g;
  return out;
}

Tensor stack_rows(std::span<const Tensor> parts, std::size_t cols) {
  std::size_t rows = 0;
  for (const auto& p : parts) rows += p.rows();
  Tensor out({rows, cols});
  std::size_t at = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out.data() + at);
    at += p.size();
  }
  return out;
}

Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t count) {
  Tensor out({count, t.cols()});
  std::copy(t.data() + begin * t.cols(), t.data() + (begin + count) * t.cols(), out.data());
  return out;
}

ElboNoise slice_noise(const ElboNoise& noise, std::size_t begin, std::size_t count) {
  ElboNoise out;
  out.content = slice_rows(noise.content, begin, count);
  if (!noise.style.empty()) out.style = slice_rows(noise.style, begin, count);
  return out;
}

// Chunks of `members` with sizes differing by at most one.
void append_chunks(std::size_t group, const std::vector<std::size_t>& members, std::size_t max_size,
                   std::vector<SampledGroup>& out) {
  const std::size_t n = members.size();
  const std::size_t count = max_size == kUnlimitedGroupSize ? 1 : (n + max_size - 1) / max_size;
  std::size_t at = 0;
  for (std::size_t c = 0; c < count; ++c) {
    const std::size_t size = n / count + (c < n % count ? 1 : 0);
    SampledGroup chunk{group, {}};
    chunk.members.assign(members.begin() + static_cast<std::ptrdiff_t>(at),
                         members.begin() + static_cast<std::ptrdiff_t>(at + size));
    std::sort(chunk.members.begin(), chunk.members.end());
    out.push_back(std::move(chunk));
    at += size;
  }
}

std::string describe_group(const GroupedDataset& dataset, const SampledGroup& g) {
  std::ostringstream msg;
  msg << "group " << g.group;
  if (dataset.has_labels()) msg << " ('" << dataset.group_labels()[g.group] << "')";
  msg << " with members [";
  for (std::size_t i = 0; i < g.members.size(); ++i) msg << (i ? "," : "") << g.members[i];
  msg << "]";
  return msg.str();
}

}  // namespace

ElboBreakdown minibatch_objective(std::span<const Tensor> groups, const ModelParams& params,
                                  std::span<const ElboNoise> noise) {
  if (groups.empty()) throw std::invalid_argument("minibatch_objective: no groups");
  if (noise.size() != groups.size()) throw std::invalid_argument("minibatch_objective: one noise draw per group");
  for (const auto& g : groups)
    if (g.empty() || g.rank() != 2) throw std::invalid_argument("group_elbo: empty group");
  const auto& arch = params.architecture();
  std::vector<Tensor> content, style;
  for (const auto& n : noise) {
    content.push_back(n.content);
    if (arch.d_style > 0) style.push_back(n.style);
  }
  ElboNoise stacked;
  stacked.content = stack_rows(content, arch.d_content);
  if (arch.d_style > 0) stacked.style = stack_rows(style, arch.d_style);

  Tape tape;
  BoundModel model(tape, params, false);
  return mean_of(group_elbo_terms(model, GroupBatch::from_groups(groups), stacked));
}

ElboBreakdown minibatch_objective(std::span<const Tensor> groups, const ModelParams& params, CounterRng& rng) {
  std::vector<ElboNoise> noise;
  for (const auto& g : groups) noise.push_back(ElboNoise::draw(g.empty() ? 0 : g.rows(), params.architecture(), rng));
  return minibatch_objective(groups, params, noise);
}

std::vector<SampledGroup> epoch_chunks(const GroupedDataset& dataset, std::size_t max_group_size, CounterRng& rng) {
  std::vector<SampledGroup> chunks;
  for (std::size_t g = 0; g < dataset.group_count(); ++g) {
    auto members = dataset.groups()[g];
    shuffle(members, rng);
    append_chunks(g, members, max_group_size, chunks);
  }
  shuffle(chunks, rng);
  return chunks;
}

ElboBreakdown dataset_objective(const GroupedDataset& dataset, const ModelParams& params, std::size_t max_group_size,
                                std::uint64_t seed) {
  if (dataset.empty()) throw std::invalid_argument("dataset_objective: dataset is empty");
  std::vector<SampledGroup> chunks;
  for (std::size_t g = 0; g < dataset.group_count(); ++g) append_chunks(g, dataset.groups()[g], max_group_size, chunks);

  CounterRng rng = CounterRng(seed).fork("validation");
  constexpr std::size_t kChunksPerPass = 32;
  ElboBreakdown sum;
  for (std::size_t begin = 0; begin < chunks.size(); begin += kChunksPerPass) {
    const std::size_t end = std::min(chunks.size(), begin + kChunksPerPass);
    std::vector<Tensor> groups;
    std::vector<ElboNoise> noise;
    for (std::size_t c = begin; c < end; ++c) {
      groups.push_back(dataset.gather(chunks[c].members));
      noise.push_back(ElboNoise::draw(chunks[c].members.size(), params.architecture(), rng));
    }
    const auto part = minibatch_objective(groups, params, noise);
    const double w = static_cast<double>(end - begin);
    sum.reconstruction += w * part.reconstruction;
    sum.style_kl += w * part.style_kl;
    sum.content_kl += w * part.content_kl;
    sum.total += w * part.total;
  }
  const double n = static_cast<double>(chunks.size());
  return {sum.reconstruction / n, sum.style_kl / n, sum.content_kl / n, sum.total / n};
}

namespace {

// One Adam step on the negated minibatch objective. Returns the objective.
ElboBreakdown train_step(ModelParams& params, OptimizerState& state, const AdamConfig& adam,
                         const GroupedDataset& dataset, std::span<const SampledGroup> chunks, CounterRng& rng) {
  const auto& arch = params.architecture();
  std::vector<Tensor> groups;
  for (const auto& c : chunks) groups.push_back(dataset.gather(c.members));
  const GroupBatch batch = GroupBatch::from_groups(groups);
  const ElboNoise noise = ElboNoise::draw(batch.rows(), arch, rng);

  ElboBreakdown objective;
  std::vector<Tensor> grads;
  try {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& p : params.parameters()) vars.push_back(tape.variable(p.value));
    BoundModel model(tape, arch, vars);
    const ElboVars terms = group_elbo_terms(model, batch, noise);
    objective = mean_of(terms);
    tape.backward(-ops::mean(terms.total));
    for (const auto& v : vars) {
      tape.gradient(v).require_finite("objective gradient");
      grads.push_back(tape.gradient(v));
    }
  } catch (const NonFiniteError& e) {
    // Re-run each group alone to name the one that breaks.
    for (std::size_t g = 0; g < chunks.size(); ++g) {
      try {
        const auto single = group_elbo(groups[g], params, slice_noise(noise, batch.offsets[g], groups[g].rows()));
        if (!std::isfinite(single.total)) throw NonFiniteError("objective");
      } catch (const NonFiniteError&) {
        throw TrainingDivergence("training diverged at optimizer step " + std::to_string(state.step + 1) + " on " +
                                 describe_group(dataset, chunks[g]) + ": " + e.what());
      }
    }
    throw TrainingDivergence("training diverged at optimizer step " + std::to_string(state.step + 1) +
                             " (minibatch of " + std::to_string(chunks.size()) + " groups): " + e.what());
  }

  auto values = params.values();
  adam_step(values, grads, state, adam);
  params.set_values(values);
  return objective;
}

}  // namespace

TrainResult train(const GroupedDataset& train_set, const GroupedDataset& validation_set, const Architecture& arch,
                  const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  arch.validate();
  if (train_set.empty()) throw std::invalid_argument("train: training set is empty");
  if (train_set.dim() != arch.input_dim) {
    throw ShapeError("train: images have " + std::to_string(train_set.dim()) + " values, architecture expects " +
                     std::to_string(arch.input_dim));
  }

  const CounterRng root(config.seed);
  CounterRng init_rng = root.fork("init");
  TrainResult result;
  Checkpoint& ckpt = result.checkpoint;
  ckpt.params = ModelParams::initialize(arch, init_rng);
  ckpt.optimizer = OptimizerState::zeros_like(ckpt.params.values());
  ckpt.adam = config.optimizer;
  ckpt.config_fingerprint = options.config_fingerprint;
  ckpt.precision = config.precision;
  ckpt.rng = root.fork("train");

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto chunks = epoch_chunks(train_set, config.max_group_size, ckpt.rng);
    ElboBreakdown sum;
    for (std::size_t begin = 0; begin < chunks.size(); begin += config.groups_per_minibatch) {
      const std::size_t count = std::min(config.groups_per_minibatch, chunks.size() - begin);
      const auto obj = train_step(ckpt.params, ckpt.optimizer, config.optimizer, train_set,
                                  std::span(chunks).subspan(begin, count), ckpt.rng);
      const double w = static_cast<double>(count);
      sum.reconstruction += w * obj.reconstruction;
      sum.style_kl += w * obj.style_kl;
      sum.content_kl += w * obj.content_kl;
      sum.total += w * obj.total;
    }
    const double n = static_cast<double>(chunks.size());
    ckpt.epoch = epoch;

    EpochMetrics train_row{epoch, "train", {sum.reconstruction / n, sum.style_kl / n, sum.content_kl / n, sum.total / n}};
    result.metrics.push_back(train_row);
    if (options.on_epoch) options.on_epoch(train_row);
    if (!validation_set.empty()) {
      EpochMetrics val_row{epoch, "validation",
                           dataset_objective(validation_set, ckpt.params, config.max_group_size, config.seed)};
      result.metrics.push_back(val_row);
      if (options.on_epoch) options.on_epoch(val_row);
    }
  }
  return result;
}

void write_metrics_csv(const fs::path& path, std::span<const EpochMetrics> metrics) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,split,objective,reconstruction,style_kl,content_kl\n";
  char line[256];
  for (const auto& m : metrics) {
    std::snprintf(line, sizeof line, "%zu,%s,%.17g,%.17g,%.17g,%.17g\n", m.epoch, m.split.c_str(), m.objective.total,
                  m.objective.reconstruction, m.objective.style_kl, m.objective.content_kl);
    out << line;
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ordered_json architecture_to_json(const Architecture& arch) {
  return ordered_json{{"input_dim", arch.input_dim},
                      {"hidden", arch.hidden},
                      {"d_style", arch.d_style},
                      {"d_content", arch.d_content},
                      {"activation", to_string(arch.activation)},
                      {"likelihood", to_string(arch.likelihood)},
                      {"observation_variance", arch.observation_variance}};
}

Architecture architecture_from_json(const ordered_json& j) {
  Architecture arch;
  arch.input_dim = j.at("input_dim").get<std::size_t>();
  arch.hidden = j.at("hidden").get<std::size_t>();
  arch.d_style = j.at("d_style").get<std::size_t>();
  arch.d_content = j.at("d_content").get<std::size_t>();
  arch.activation = activation_from_string(j.at("activation").get<std::string>());
  arch.likelihood = likelihood_from_string(j.at("likelihood").get<std::string>());
  arch.observation_variance = j.at("observation_variance").get<double>();
  return arch;
}

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& dir) {
  TensorArchive archive;
  archive.dtype = checkpoint.precision;
  archive.metadata = ordered_json{
      {"kind", "checkpoint"},
      {"architecture", architecture_to_json(checkpoint.params.architecture())},
      {"optimizer",
       {{"learning_rate", checkpoint.adam.learning_rate},
        {"beta1", checkpoint.adam.beta1},
        {"beta2", checkpoint.adam.beta2},
        {"epsilon", checkpoint.adam.epsilon},
        {"step", checkpoint.optimizer.step}}},
      {"epoch", checkpoint.epoch},
      {"config_fingerprint", checkpoint.config_fingerprint},
      {"rng", {{"key", checkpoint.rng.key()}, {"counter", checkpoint.rng.counter()}}}};
  const auto& params = checkpoint.params.parameters();
  for (const auto& p : params) archive.tensors.push_back({p.name, p.value});
  const bool has_moments = !checkpoint.optimizer.first_moment.empty();
  if (has_moments) {
    if (checkpoint.optimizer.first_moment.size() != params.size() ||
        checkpoint.optimizer.second_moment.size() != params.size()) {
      throw ShapeError("save_checkpoint: optimizer state does not match the parameter list");
    }
    for (std::size_t k = 0; k < params.size(); ++k)
      archive.tensors.push_back({"adam.m." + params[k].name, checkpoint.optimizer.first_moment[k]});
    for (std::size_t k = 0; k < params.size(); ++k)
      archive.tensors.push_back({"adam.v." + params[k].name, checkpoint.optimizer.second_moment[k]});
  }
  write_tensor_archive(dir, archive);
}

namespace {

void check_shapes(const Architecture& stored, const Architecture& expected) {
  if (stored.likelihood != expected.likelihood || stored.activation != expected.activation ||
      stored.observation_variance != expected.observation_variance) {
    throw FormatError("architecture mismatch: checkpoint uses " + architecture_to_json(stored).dump() +
                      ", configuration expects " + architecture_to_json(expected).dump());
  }
  const auto have = ModelParams::layout(stored);
  const auto want = ModelParams::layout(expected);
  for (const auto& [name, shape] : want) {
    const auto it = std::find_if(have.begin(), have.end(), [&](const auto& h) { return h.first == name; });
    if (it == have.end()) throw FormatError("shape mismatch: checkpoint has no parameter '" + name + "'");
    if (it->second != shape) {
      throw FormatError("shape mismatch: parameter '" + name + "' is " + shape_to_string(it->second) +
                        " in the checkpoint but the configured architecture needs " + shape_to_string(shape));
    }
  }
  if (have.size() != want.size()) throw FormatError("shape mismatch: parameter lists differ in length");
}

}  // namespace

Checkpoint load_checkpoint(const fs::path& dir) {
  const TensorArchive archive = read_tensor_archive(dir);
  Checkpoint ckpt;
  ckpt.precision = archive.dtype;
  Architecture arch;
  try {
    const auto& meta = archive.metadata;
    if (meta.at("kind").get<std::string>() != "checkpoint") throw FormatError("archive is not a checkpoint");
    arch = architecture_from_json(meta.at("architecture"));
    const auto& opt = meta.at("optimizer");
    ckpt.adam.learning_rate = opt.at("learning_rate").get<double>();
    ckpt.adam.beta1 = opt.at("beta1").get<double>();
    ckpt.adam.beta2 = opt.at("beta2").get<double>();
    ckpt.adam.epsilon = opt.at("epsilon").get<double>();
    ckpt.optimizer.step = opt.at("step").get<std::uint64_t>();
    ckpt.epoch = meta.at("epoch").get<std::uint64_t>();
    ckpt.config_fingerprint = meta.at("config_fingerprint").get<std::string>();
    ckpt.rng = CounterRng(meta.at("rng").at("key").get<std::uint64_t>(), meta.at("rng").at("counter").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed checkpoint metadata in " + dir.string() + ": " + e.what());
  }
  arch.validate();

  std::vector<Parameter> params;
  for (const auto& [name, shape] : ModelParams::layout(arch)) {
    const Tensor& t = archive.get(name);
    if (t.shape() != shape) {
      throw FormatError("shape mismatch: tensor '" + name + "' is " + shape_to_string(t.shape()) +
                        " but the stored architecture needs " + shape_to_string(shape));
    }
    params.push_back({name, t});
  }
  const bool has_moments = std::any_of(archive.tensors.begin(), archive.tensors.end(),
                                       [](const NamedTensor& t) { return t.name.rfind("adam.", 0) == 0; });
  if (has_moments) {
    for (const auto& p : params) {
      const Tensor& m = archive.get("adam.m." + p.name);
      const Tensor& v = archive.get("adam.v." + p.name);
      if (m.shape() != p.value.shape() || v.shape() != p.value.shape()) {
        throw FormatError("shape mismatch: optimizer moments of '" + p.name + "' do not match the parameter");
      }
      ckpt.optimizer.first_moment.push_back(m);
      ckpt.optimizer.second_moment.push_back(v);
    }
  }
  const std::size_t expected_tensors = params.size() * (has_moments ? 3 : 1);
  if (archive.tensors.size() != expected_tensors) {
    throw FormatError("checkpoint holds " + std::to_string(archive.tensors.size()) + " tensors, expected " +
                      std::to_string(expected_tensors));
  }
  ckpt.params = ModelParams(arch, std::move(params));
  return ckpt;
}

Checkpoint load_checkpoint(const fs::path& dir, const Architecture& expected) {
  // Compare against the manifest first so the message names the offending tensor.
  const TensorArchive archive = read_tensor_archive(dir);
  try {
    check_shapes(architecture_from_json(archive.metadata.at("architecture")), expected);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed checkpoint metadata in " + dir.string() + ": " + e.what());
  }
  return load_checkpoint(dir);
}

}  // namespace mlvae
