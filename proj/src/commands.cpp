#include "mlvae/commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

namespace mlvae {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kDiverged = 3 };

Architecture architecture_for(const RunConfig& config, const GroupedDataset& data) {
  Architecture arch = config.model;
  arch.input_dim = data.dim();
  return arch;
}

Architecture baseline_architecture(const Architecture& arch) {
  Architecture base = arch;
  base.d_content = arch.d_content + arch.d_style;
  base.d_style = 0;
  return base;
}

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::size_t count_lines(const fs::path& path) {
  std::ifstream in(path);
  return static_cast<std::size_t>(std::count(std::istreambuf_iterator<char>(in), {}, '\n'));
}

TrainOptions progress(const RunConfig& config, std::ostream& log, const std::string& tag) {
  TrainOptions options;
  options.config_fingerprint = config.fingerprint();
  options.on_epoch = [&log, tag](const EpochMetrics& m) {
    log << tag << "epoch " << m.epoch << " " << m.split << " objective " << m.objective.total << "\n";
  };
  return options;
}

}  // namespace

int cmd_train(const RunConfig& config, std::ostream& log) {
  const RunData data = load_run_data(config);
  const Architecture arch = architecture_for(config, data.train);
  fs::create_directories(config.output_dir);
  write_json(config.output_dir / "resolved_config.json", config.resolved);
  log << "training on " << data.train.size() << " images in " << data.train.group_count() << " groups ("
      << data.validation.size() << " validation)\n";

  TrainResult result;
  try {
    result = train(data.train, data.validation, arch, config.train, progress(config, log, ""));
  } catch (const TrainingDivergence& e) {
    log << "error: " << e.what() << "\n";
    return kDiverged;
  }

  const fs::path ckpt_dir = config.output_dir / "checkpoint";
  save_checkpoint(result.checkpoint, ckpt_dir);
  write_metrics_csv(config.output_dir / "metrics.csv", result.metrics);
  write_json(config.output_dir / "metrics.meta.json",
             ordered_json{{"config_fingerprint", result.checkpoint.config_fingerprint},
                          {"max_group_size", config.resolved.at("train").at("max_group_size")},
                          {"group_subsampling",
                           "groups larger than max_group_size are cut into random chunks each epoch; chunk-level "
                           "objectives are biased estimates of the full-group ELBO"}});

  // Read everything back before reporting success.
  const Checkpoint reloaded = load_checkpoint(ckpt_dir, arch);
  if (config.train.precision == BlobDType::f64 && !(reloaded.params == result.checkpoint.params)) {
    log << "error: checkpoint did not read back identically\n";
    return kFailure;
  }
  if (count_lines(config.output_dir / "metrics.csv") != result.metrics.size() + 1) {
    log << "error: metrics.csv is incomplete\n";
    return kFailure;
  }
  log << "wrote " << ckpt_dir.string() << " and " << (config.output_dir / "metrics.csv").string() << "\n";
  return kOk;
}

int cmd_eval(const RunConfig& config, const fs::path& checkpoint, std::ostream& log) {
  try {
    config.eval.validate();
  } catch (const std::invalid_argument& e) {
    log << "error: " << e.what() << "\n";
    return kUsage;
  }
  const RunData data = load_run_data(config);
  const Architecture arch = architecture_for(config, data.train);
  const Checkpoint ckpt = load_checkpoint(checkpoint, arch);

  std::optional<ModelParams> baseline;
  if (config.baseline_vae) {
    TrainConfig tc = config.train;
    tc.max_group_size = 1;
    log << "training the single-latent baseline\n";
    try {
      baseline = train(data.train, data.validation, baseline_architecture(arch), tc, progress(config, log, "baseline "))
                     .checkpoint.params;
    } catch (const TrainingDivergence& e) {
      log << "error: " << e.what() << "\n";
      return kDiverged;
    }
  }
  log << "evaluating on " << data.eval.size() << " images in " << data.eval.group_count() << " classes\n";
  const MetricsTable table = disentanglement_eval(ckpt.params, data.eval, config.eval, baseline ? &*baseline : nullptr);
  fs::create_directories(config.output_dir);
  const fs::path out = config.output_dir / "eval_metrics.csv";
  write_metrics_table_csv(out, table);
  for (const auto& r : table.rows) {
    log << r.feature_set << " k=" << r.k << " accuracy " << r.accuracy << " conditional_entropy "
        << r.conditional_entropy << "\n";
  }
  if (count_lines(out) != table.rows.size() + 1) {
    log << "error: " << out.string() << " is incomplete\n";
    return kFailure;
  }
  return kOk;
}

int cmd_manipulate(const RunConfig& config, const fs::path& checkpoint, const std::string& mode, std::ostream& log) {
  if (std::find(kManipulateModes.begin(), kManipulateModes.end(), mode) == kManipulateModes.end()) {
    log << "error: unknown mode '" << mode << "' (expected swap, interpolate, generate or compare)\n";
    return kUsage;
  }
  const RunData data = load_run_data(config);
  const Architecture arch = architecture_for(config, data.train);
  const ModelParams params = load_checkpoint(checkpoint, arch).params;
  const GroupedDataset& ds = data.eval;
  const auto& groups = ds.groups();
  const ManipulateConfig& mc = config.manipulate;

  ImageGrid grid;
  if (mode == "swap") {
    // Inputs cycle through the groups; evidence comes from the same group.
    std::vector<std::size_t> picks;
    std::vector<std::optional<Tensor>> evidence;
    for (std::size_t i = 0; i < mc.swap_count; ++i) {
      const auto& g = groups[i % groups.size()];
      const std::size_t pos = i / groups.size();
      if (pos >= g.size()) throw std::invalid_argument("swap: not enough images in the evaluation groups");
      picks.push_back(g[pos]);
      std::vector<std::size_t> others;
      for (std::size_t k = 0; k < g.size() && others.size() < mc.swap_evidence; ++k)
        if (k != pos) others.push_back(g[k]);
      evidence.push_back(others.empty() ? std::nullopt : std::optional<Tensor>(ds.gather(others)));
    }
    grid = swap_grid(params, ds.gather(picks), evidence);
  } else if (mode == "interpolate") {
    const std::size_t a = groups[0][0];
    const std::size_t b = groups.size() > 1 ? groups[1][0] : groups[0].back();
    const Tensor pair = ds.gather(std::vector<std::size_t>{a, b});
    const auto values = pair.values();
    grid = interpolate(params, values.subspan(0, ds.dim()), values.subspan(ds.dim()), config.eval.interpolation_steps);
  } else if (mode == "generate") {
    CounterRng rng = CounterRng(config.seed).fork("generate");
    grid = generate_for_group(params, ds.group_tensor(0), mc.n_styles, rng);
  } else {
    std::vector<std::size_t> members(groups[0].begin(),
                                     groups[0].begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(mc.compare_group_size, groups[0].size())));
    grid = reconstruct_compare(params, ds.gather(members));
  }
  grid.format = ds.format();
  for (const auto& w : grid.warnings) log << "warning: " << w << "\n";

  const fs::path dir = config.output_dir / "grids";
  fs::create_directories(dir);
  const fs::path out = dir / (mode + (ds.format().channels == 1 ? ".pgm" : ".ppm"));
  write_grid(grid, out);
  if (!fs::exists(out) || !fs::exists(out.string() + ".roles.txt")) {
    log << "error: grid files missing\n";
    return kFailure;
  }
  log << "wrote " << grid.rows << "x" << grid.cols << " grid to " << out.string() << "\n";
  return kOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-level VAE: grouped training, disentanglement evaluation and latent manipulation"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::string checkpoint;
  std::string mode;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the root seed");
    sub->add_option("--out", out_dir, "override the output directory");
  };
  CLI::App* train_cmd = app.add_subcommand("train", "train a model and write checkpoint + metrics");
  common(train_cmd);
  CLI::App* eval_cmd = app.add_subcommand("eval", "classifier-based disentanglement metrics");
  common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint directory (default <out>/checkpoint)");
  CLI::App* manip_cmd = app.add_subcommand("manipulate", "write latent manipulation image grids");
  common(manip_cmd);
  manip_cmd->add_option("--checkpoint", checkpoint, "checkpoint directory (default <out>/checkpoint)");
  manip_cmd->add_option("--mode", mode, "swap, interpolate, generate or compare")
      ->required()
      ->check(CLI::IsMember(kManipulateModes));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kUsage;
  }

  try {
    ConfigOverrides overrides;
    overrides.seed = seed;
    if (out_dir) overrides.output_dir = fs::path(*out_dir);
    const RunConfig config = load_run_config(config_path, overrides);
    const fs::path ckpt = checkpoint.empty() ? config.output_dir / "checkpoint" : fs::path(checkpoint);
    if (train_cmd->parsed()) return cmd_train(config, err);
    if (eval_cmd->parsed()) return cmd_eval(config, ckpt, err);
    return cmd_manipulate(config, ckpt, mode, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace mlvae
