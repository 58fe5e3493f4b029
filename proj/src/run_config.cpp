#include "mlvae/run_config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "mlvae/idx.hpp"

namespace mlvae {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Best-effort line lookup: follows the key path through the source text.
class Locator {
 public:
  explicit Locator(const std::string& text) : text_(text) {}

  std::string where(const std::vector<std::string>& path) const {
    std::size_t pos = 0;
    for (const auto& key : path) {
      const auto found = text_.find("\"" + key + "\"", pos);
      if (found == std::string::npos) return "";
      pos = found;
    }
    const auto line = 1 + std::count(text_.begin(), text_.begin() + static_cast<std::ptrdiff_t>(pos), '\n');
    return " (line " + std::to_string(line) + ")";
  }

 private:
  const std::string& text_;
};

std::string join(const std::vector<std::string>& path) {
  std::string out;
  for (const auto& p : path) out += (out.empty() ? "" : ".") + p;
  return out;
}

// A JSON object whose keys must all be consumed.
class Section {
 public:
  Section(const ordered_json& j, std::vector<std::string> path, const Locator& loc, const std::string& source)
      : j_(j), path_(std::move(path)), loc_(loc), source_(source) {
    if (!j_.is_object()) fail(path_, "must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  Section child(const std::string& key) {
    seen_.insert(key);
    static const ordered_json empty = ordered_json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, extend(key), loc_, source_);
  }

  const ordered_json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) fail(extend(key), "is required");
    return j_.at(key);
  }

  std::uint64_t require_u64(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_number_unsigned()) fail(extend(key), "must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  std::size_t count(const std::string& key, std::size_t fallback, std::size_t min = 0) {
    if (!has(key)) {
      seen_.insert(key);
      return fallback;
    }
    const auto& v = raw(key);
    if (!v.is_number_unsigned()) fail(extend(key), "must be a non-negative integer");
    const auto out = v.get<std::size_t>();
    if (out < min) fail(extend(key), "must be at least " + std::to_string(min));
    return out;
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) {
      seen_.insert(key);
      return fallback;
    }
    const auto& v = raw(key);
    if (!v.is_number()) fail(extend(key), "must be a number");
    return v.get<double>();
  }

  std::string text(const std::string& key, const std::string& fallback) {
    if (!has(key)) {
      seen_.insert(key);
      return fallback;
    }
    const auto& v = raw(key);
    if (!v.is_string()) fail(extend(key), "must be a string");
    return v.get<std::string>();
  }

  bool flag(const std::string& key, bool fallback) {
    if (!has(key)) {
      seen_.insert(key);
      return fallback;
    }
    const auto& v = raw(key);
    if (!v.is_boolean()) fail(extend(key), "must be true or false");
    return v.get<bool>();
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) fail(extend(key), "is not a recognised key");
    }
  }

  [[noreturn]] void fail(const std::vector<std::string>& path, const std::string& what) const {
    throw ConfigError(source_ + ": '" + join(path) + "' " + what + loc_.where(path));
  }
  [[noreturn]] void fail_key(const std::string& key, const std::string& what) const { fail(extend(key), what); }

 private:
  std::vector<std::string> extend(const std::string& key) const {
    auto p = path_;
    p.push_back(key);
    return p;
  }

  const ordered_json& j_;
  std::vector<std::string> path_;
  const Locator& loc_;
  const std::string& source_;
  std::set<std::string> seen_;
};

template <typename F>
auto guarded(Section& s, const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    s.fail_key(key, e.what());
  }
}

fs::path resolve_path(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

}  // namespace

std::string RunConfig::fingerprint() const {
  ordered_json subject = {{"seed", resolved.at("seed")},
                          {"dataset", resolved.at("dataset")},
                          {"model", resolved.at("model")},
                          {"train", resolved.at("train")}};
  // 64-bit FNV-1a.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : subject.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir, const ConfigOverrides& overrides,
                           const std::string& source) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(source + ": parse error: " + e.what());
  }
  const Locator loc(text);
  Section root(doc, {}, loc, source);
  RunConfig cfg;
  ordered_json record = ordered_json::object();

  if (overrides.seed) {
    if (root.has("seed")) root.require_u64("seed");
    else root.child("seed");
    cfg.seed = *overrides.seed;
    record["--seed"] = *overrides.seed;
  } else {
    cfg.seed = root.require_u64("seed");
  }
  if (overrides.output_dir) {
    if (root.has("output_dir")) root.text("output_dir", "");
    cfg.output_dir = fs::absolute(*overrides.output_dir).lexically_normal();
    record["--out"] = overrides.output_dir->string();
  } else {
    if (!root.has("output_dir")) root.fail({"output_dir"}, "is required");
    cfg.output_dir = resolve_path(base_dir, root.text("output_dir", ""));
  }
  root.child("overrides");  // informational, written by a previous run

  // dataset
  {
    Section ds = root.child("dataset");
    if (!ds.has("kind")) ds.fail_key("kind", "is required (\"shapes\" or \"mnist\")");
    const std::string kind = ds.text("kind", "");
    ordered_json out = {{"kind", kind}};
    if (kind == "shapes") {
      cfg.dataset.kind = DatasetKind::shapes;
      ShapesSpec& spec = cfg.dataset.shapes;
      spec.image_size = ds.count("image_size", spec.image_size, 4);
      if (ds.has("shapes")) {
        const auto& list = ds.raw("shapes");
        if (!list.is_array()) ds.fail_key("shapes", "must be a list of shape names");
        spec.shapes.clear();
        for (const auto& s : list) {
          if (!s.is_string()) ds.fail_key("shapes", "must be a list of shape names");
          spec.shapes.push_back(guarded(ds, "shapes", [&] { return shape_kind_from_string(s.get<std::string>()); }));
        }
      } else {
        ds.child("shapes");
      }
      if (ds.has("colors")) {
        const auto& list = ds.raw("colors");
        if (!list.is_array()) ds.fail_key("colors", "must be a list of {\"name\", \"rgb\"} objects");
        spec.colors.clear();
        for (const auto& c : list) {
          if (!c.is_object() || !c.contains("name") || !c.contains("rgb") || c.size() != 2 ||
              !c.at("name").is_string() || !c.at("rgb").is_array() || c.at("rgb").size() != 3) {
            ds.fail_key("colors", "entries must be {\"name\": string, \"rgb\": [r, g, b]}");
          }
          NamedColor color{c.at("name").get<std::string>(), {}};
          for (std::size_t k = 0; k < 3; ++k) {
            if (!c.at("rgb")[k].is_number()) ds.fail_key("colors", "rgb values must be numbers");
            color.rgb[k] = c.at("rgb")[k].get<float>();
          }
          spec.colors.push_back(color);
        }
      } else {
        ds.child("colors");
      }
      spec.samples_per_group = ds.count("samples_per_group", spec.samples_per_group, 1);
      spec.base_radius = ds.number("base_radius", spec.base_radius);
      spec.position_jitter = ds.number("position_jitter", spec.position_jitter);
      spec.scale_jitter = ds.number("scale_jitter", spec.scale_jitter);
      const std::string group_by = ds.text("group_by", "shape");
      if (group_by != "shape" && group_by != "color") ds.fail_key("group_by", "must be \"shape\" or \"color\"");
      spec.group_by = group_by == "shape" ? GroupBy::shape : GroupBy::color;
      cfg.dataset.eval_samples_per_group = ds.count("eval_samples_per_group", cfg.dataset.eval_samples_per_group, 1);
      cfg.dataset.validation_fraction = ds.number("validation_fraction", cfg.dataset.validation_fraction);
      if (!(cfg.dataset.validation_fraction >= 0.0 && cfg.dataset.validation_fraction < 1.0)) {
        ds.fail_key("validation_fraction", "must lie in [0, 1)");
      }
      guarded(ds, "image_size", [&] {
        spec.validate();
        return 0;
      });

      ordered_json shapes = ordered_json::array(), colors = ordered_json::array();
      for (auto s : spec.shapes) shapes.push_back(to_string(s));
      for (const auto& c : spec.colors) colors.push_back({{"name", c.name}, {"rgb", c.rgb}});
      out.update(ordered_json{{"image_size", spec.image_size},
                              {"shapes", shapes},
                              {"colors", colors},
                              {"samples_per_group", spec.samples_per_group},
                              {"base_radius", spec.base_radius},
                              {"position_jitter", spec.position_jitter},
                              {"scale_jitter", spec.scale_jitter},
                              {"group_by", group_by},
                              {"eval_samples_per_group", cfg.dataset.eval_samples_per_group},
                              {"validation_fraction", cfg.dataset.validation_fraction}});
    } else if (kind == "mnist") {
      cfg.dataset.kind = DatasetKind::mnist;
      if (!ds.has("images")) ds.fail_key("images", "is required");
      if (!ds.has("labels")) ds.fail_key("labels", "is required");
      cfg.dataset.images = resolve_path(base_dir, ds.text("images", ""));
      cfg.dataset.labels = resolve_path(base_dir, ds.text("labels", ""));
      if (!ds.has("train_count")) ds.fail_key("train_count", "is required");
      cfg.dataset.train_count = ds.count("train_count", 0, 1);
      cfg.dataset.validation_count = ds.count("validation_count", 0);
      out.update(ordered_json{{"images", cfg.dataset.images.string()},
                              {"labels", cfg.dataset.labels.string()},
                              {"train_count", cfg.dataset.train_count},
                              {"validation_count", cfg.dataset.validation_count}});
    } else {
      ds.fail_key("kind", "must be \"shapes\" or \"mnist\"");
    }
    ds.finish();
    record["dataset"] = out;
  }

  // model
  {
    Section m = root.child("model");
    Architecture& a = cfg.model;
    a.hidden = m.count("hidden", a.hidden);
    a.d_style = m.count("d_style", a.d_style, 1);
    a.d_content = m.count("d_content", a.d_content, 1);
    a.activation = guarded(m, "activation", [&] { return activation_from_string(m.text("activation", "relu")); });
    m.finish();
    record["model"] = {{"hidden", a.hidden},
                       {"d_style", a.d_style},
                       {"d_content", a.d_content},
                       {"activation", to_string(a.activation)}};
  }

  // train
  {
    Section t = root.child("train");
    TrainConfig& tc = cfg.train;
    tc.seed = cfg.seed;
    tc.groups_per_minibatch = t.count("groups_per_minibatch", tc.groups_per_minibatch, 1);
    if (t.has("max_group_size") && t.raw("max_group_size").is_string()) {
      if (t.raw("max_group_size").get<std::string>() != "unlimited") {
        t.fail_key("max_group_size", "must be a positive integer or \"unlimited\"");
      }
      tc.max_group_size = kUnlimitedGroupSize;
    } else {
      tc.max_group_size = t.count("max_group_size", tc.max_group_size, 1);
    }
    tc.epochs = t.count("epochs", tc.epochs, 1);
    tc.optimizer.learning_rate = t.number("learning_rate", tc.optimizer.learning_rate);
    tc.optimizer.beta1 = t.number("beta1", tc.optimizer.beta1);
    tc.optimizer.beta2 = t.number("beta2", tc.optimizer.beta2);
    tc.optimizer.epsilon = t.number("epsilon", tc.optimizer.epsilon);
    guarded(t, "learning_rate", [&] {
      tc.optimizer.validate();
      return 0;
    });
    const std::string precision = t.text("precision", "f64");
    if (precision != "f32" && precision != "f64") t.fail_key("precision", "must be \"f32\" or \"f64\"");
    tc.precision = blob_dtype_from_string(precision);
    t.finish();
    record["train"] = {{"groups_per_minibatch", tc.groups_per_minibatch},
                       {"max_group_size", tc.max_group_size == kUnlimitedGroupSize
                                              ? ordered_json("unlimited")
                                              : ordered_json(tc.max_group_size)},
                       {"epochs", tc.epochs},
                       {"learning_rate", tc.optimizer.learning_rate},
                       {"beta1", tc.optimizer.beta1},
                       {"beta2", tc.optimizer.beta2},
                       {"epsilon", tc.optimizer.epsilon},
                       {"precision", precision}};
  }

  // eval
  {
    Section e = root.child("eval");
    EvalConfig& ec = cfg.eval;
    ec.seed = CounterRng(cfg.seed).fork("eval").key();
    ec.K = e.count("K", ec.K);
    if (e.has("k_values")) {
      const auto& ks = e.raw("k_values");
      if (!ks.is_array() || ks.empty()) e.fail_key("k_values", "must be a nonempty list of integers");
      ec.k_values.clear();
      for (const auto& k : ks) {
        if (!k.is_number_unsigned()) e.fail_key("k_values", "must be a nonempty list of integers");
        ec.k_values.push_back(k.get<std::size_t>());
      }
    } else {
      e.child("k_values");
    }
    ec.classifier_hidden = e.count("classifier_hidden", ec.classifier_hidden, 1);
    ec.classifier_epochs = e.count("classifier_epochs", ec.classifier_epochs);
    ec.batch_size = e.count("batch_size", ec.batch_size, 1);
    ec.interpolation_steps = e.count("interpolation_steps", ec.interpolation_steps, 2);
    cfg.baseline_vae = e.flag("baseline_vae", false);
    ManipulateConfig& mc = cfg.manipulate;
    mc.swap_count = e.count("swap_count", mc.swap_count, 1);
    mc.swap_evidence = e.count("swap_evidence", mc.swap_evidence);
    mc.n_styles = e.count("n_styles", mc.n_styles);
    mc.compare_group_size = e.count("compare_group_size", mc.compare_group_size, 1);
    e.finish();
    record["eval"] = {{"K", ec.K},
                      {"k_values", ec.k_values},
                      {"classifier_hidden", ec.classifier_hidden},
                      {"classifier_epochs", ec.classifier_epochs},
                      {"batch_size", ec.batch_size},
                      {"interpolation_steps", ec.interpolation_steps},
                      {"baseline_vae", cfg.baseline_vae},
                      {"swap_count", mc.swap_count},
                      {"swap_evidence", mc.swap_evidence},
                      {"n_styles", mc.n_styles},
                      {"compare_group_size", mc.compare_group_size}};
  }
  root.finish();

  cfg.resolved = ordered_json{{"seed", cfg.seed}, {"output_dir", cfg.output_dir.string()}};
  for (const char* key : {"dataset", "model", "train", "eval"}) cfg.resolved[key] = record[key];
  ordered_json applied = ordered_json::object();
  if (record.contains("--seed")) applied["--seed"] = record["--seed"];
  if (record.contains("--out")) applied["--out"] = record["--out"];
  if (!applied.empty()) cfg.resolved["overrides"] = applied;
  return cfg;
}

RunConfig load_run_config(const fs::path& path, const ConfigOverrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), fs::absolute(path).parent_path(), overrides, path.string());
}

RunData load_run_data(const RunConfig& config) {
  const CounterRng root(config.seed);
  RunData data;
  if (config.dataset.kind == DatasetKind::shapes) {
    ShapesSpec spec = config.dataset.shapes;
    spec.seed = root.fork("shapes-train").key();
    const auto all = generate_shapes_dataset(spec);
    std::tie(data.train, data.validation) =
        split_dataset(all, 1.0 - config.dataset.validation_fraction, root.fork("split").key());
    spec.seed = root.fork("shapes-eval").key();
    spec.samples_per_group = config.dataset.eval_samples_per_group;
    data.eval = generate_shapes_dataset(spec);
  } else {
    const auto all = load_mnist_idx(config.dataset.images, config.dataset.labels);
    const std::size_t used = config.dataset.train_count + config.dataset.validation_count;
    if (used >= all.size()) {
      throw ConfigError("dataset: train_count + validation_count = " + std::to_string(used) + " leaves no images of " +
                        std::to_string(all.size()) + " for evaluation");
    }
    GroupedDataset rest;
    std::tie(data.train, rest) =
        split_dataset(all, SplitCounts{config.dataset.train_count, all.size() - config.dataset.train_count},
                      root.fork("split").key());
    std::tie(data.validation, data.eval) = split_dataset(
        rest, SplitCounts{config.dataset.validation_count, rest.size() - config.dataset.validation_count},
        root.fork("split-eval").key());
  }
  return data;
}

}  // namespace mlvae
