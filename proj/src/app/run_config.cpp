#include "orchard/app/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "orchard/errors.hpp"

namespace orchard::app {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string to_string(Command c) {
  switch (c) {
    case Command::prepare: return "prepare";
    case Command::train: return "train";
    case Command::evaluate: return "evaluate";
    case Command::explain: return "explain";
    case Command::sweep: return "sweep";
    case Command::compare: return "compare";
  }
  return "?";
}

std::string to_string(ExplainMethod m) {
  switch (m) {
    case ExplainMethod::gradcam: return "gradcam";
    case ExplainMethod::lime: return "lime";
    case ExplainMethod::shap: return "shap";
    case ExplainMethod::all: return "all";
  }
  return "?";
}

ExplainMethod parse_explain_method(const std::string& text) {
  for (auto m : {ExplainMethod::gradcam, ExplainMethod::lime, ExplainMethod::shap, ExplainMethod::all}) {
    if (to_string(m) == text) return m;
  }
  throw ConfigError("unknown explain method '" + text + "' (expected gradcam, lime, shap or all)");
}

namespace {

std::string to_string(AugmentMode m) {
  return m == AugmentMode::deterministic_bank ? "deterministic_bank" : "random_draw";
}

AugmentMode parse_augment_mode(const std::string& text) {
  if (text == "deterministic_bank") return AugmentMode::deterministic_bank;
  if (text == "random_draw") return AugmentMode::random_draw;
  throw ConfigError("unknown augment mode '" + text + "' (expected deterministic_bank or random_draw)");
}

std::string to_string(MaskFill f) { return f == MaskFill::mean_color ? "mean_color" : "gray"; }

MaskFill parse_mask_fill(const std::string& text) {
  if (text == "mean_color") return MaskFill::mean_color;
  if (text == "gray") return MaskFill::gray;
  throw ConfigError("unknown mask fill '" + text + "' (expected mean_color or gray)");
}

// Collects problems instead of stopping at the first one.
class Reader {
 public:
  explicit Reader(std::vector<std::string>& errors) : errors_(errors) {}

  const json* object(const json& parent, const std::string& key, const std::string& where,
                     std::set<std::string> allowed) {
    const json* node = find(parent, key);
    if (!node) return nullptr;
    if (!node->is_object()) {
      errors_.push_back(where + ": expected an object");
      return nullptr;
    }
    check_keys(*node, where, allowed);
    return node;
  }

  void check_keys(const json& node, const std::string& where, const std::set<std::string>& allowed) {
    for (auto it = node.begin(); it != node.end(); ++it) {
      if (!allowed.count(it.key())) errors_.push_back(where + ": unknown key '" + it.key() + "'");
    }
  }

  template <typename T>
  void get(const json* parent, const std::string& key, const std::string& where, T& target) {
    if (!parent) return;
    const json* node = find(*parent, key);
    if (!node) return;
    try {
      if constexpr (std::is_unsigned_v<T>) {
        if (!node->is_number_unsigned()) throw ConfigError("expected a non-negative integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!node->is_number()) throw ConfigError("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!node->is_string()) throw ConfigError("expected a string");
      }
      target = node->get<T>();
    } catch (const std::exception& e) {
      errors_.push_back(where + "." + key + ": " + e.what());
    }
  }

  void path(const json* parent, const std::string& key, const std::string& where, fs::path& target) {
    std::string text = target.string();
    get(parent, key, where, text);
    target = text;
  }

  template <typename E, typename Parse>
  void enumeration(const json* parent, const std::string& key, const std::string& where, E& target, Parse parse) {
    std::string text;
    const json* node = parent ? find(*parent, key) : nullptr;
    if (!node) return;
    get(parent, key, where, text);
    if (!node->is_string()) return;
    try {
      target = parse(text);
    } catch (const ConfigError& e) {
      errors_.push_back(where + "." + key + ": " + e.what());
    }
  }

  void error(std::string message) { errors_.push_back(std::move(message)); }

 private:
  static const json* find(const json& parent, const std::string& key) {
    auto it = parent.find(key);
    return it == parent.end() ? nullptr : &*it;
  }

  std::vector<std::string>& errors_;
};

void append(std::vector<std::string>& out, const std::string& prefix, const std::vector<std::string>& errors) {
  for (const auto& e : errors) out.push_back(prefix + e);
}

}  // namespace

void RunConfig::propagate_seed() {
  split.seed = seed;
  train.seed = seed;
  train.mix.seed = seed;
}

std::vector<std::string> RunConfig::validation_errors(Command command) const {
  std::vector<std::string> errors;
  auto require_dir = [&](const fs::path& p, const std::string& name) {
    if (p.empty()) {
      errors.push_back(name + " is required for " + to_string(command));
    } else if (!fs::is_directory(p)) {
      errors.push_back(name + " '" + p.string() + "' is not an existing directory");
    }
  };
  auto require_file = [&](const fs::path& p, const std::string& name) {
    if (p.empty()) {
      errors.push_back(name + " is required for " + to_string(command));
    } else if (!fs::is_regular_file(p)) {
      errors.push_back(name + " '" + p.string() + "' is not an existing file");
    }
  };

  if (out.empty()) errors.push_back("out must not be empty");
  if (image_size < 4) errors.push_back("image_size must be >= 4");
  if (augment_factor < 1) errors.push_back("augment.factor must be >= 1");
  if (augment_mode == AugmentMode::deterministic_bank && augment_factor > 1 + kTransformBank.size()) {
    errors.push_back("augment.factor must be <= " + std::to_string(1 + kTransformBank.size()) +
                     " in deterministic_bank mode");
  }
  append(errors, "split.", split.validation_errors());

  append(errors, "train.", train.validation_errors());

  if (explain.grid < 1) errors.push_back("explain.grid must be >= 1");
  if (explain.grid > image_size) errors.push_back("explain.grid must be <= image_size");
  if (explain.lime_samples < explain.grid * explain.grid + 1) {
    errors.push_back("explain.lime_samples must be >= grid^2 + 1");
  }
  if (explain.grid * explain.grid > kShapExactMaxSegments && explain.shap_samples < explain.grid * explain.grid + 1) {
    errors.push_back("explain.shap_samples must be >= grid^2 + 1 when sampling");
  }
  if (sweep_grid.empty()) errors.push_back("sweep.grid must not be empty");
  for (const auto& [am, ac] : sweep_grid) {
    if (!(am >= 0.0) || !(ac >= 0.0)) errors.push_back("sweep.grid alphas must be >= 0");
  }

  if (command == Command::train || command == Command::sweep) {
    ModelConfig m = model;
    m.input_height = m.input_width = image_size;
    if (m.variant == ModelVariant::custom) errors.push_back("model.variant: custom models cannot be built from a config");
    if (m.num_classes < 2) m.num_classes = 2;
    append(errors, "model.", m.validation_errors());
  }

  switch (command) {
    case Command::prepare:
      require_dir(dataset, "dataset");
      break;
    case Command::train:
    case Command::sweep:
      require_dir(prepared, "prepared");
      break;
    case Command::evaluate:
      require_dir(prepared, "prepared");
      require_dir(checkpoint, "checkpoint");
      break;
    case Command::explain:
      require_dir(checkpoint, "checkpoint");
      require_file(image, "image");
      break;
    case Command::compare:
      require_dir(prepared, "prepared");
      require_dir(checkpoint_a, "checkpoint_a");
      require_dir(checkpoint_b, "checkpoint_b");
      break;
  }
  return errors;
}

void RunConfig::validate(Command command) const {
  const auto errors = validation_errors(command);
  if (errors.empty()) return;
  std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problem" +
                    (errors.size() == 1 ? "" : "s") + "):";
  for (const auto& e : errors) msg += "\n  - " + e;
  throw ConfigError(msg);
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["dataset"] = c.dataset.string();
  j["out"] = c.out.string();
  j["prepared"] = c.prepared.string();
  j["checkpoint"] = c.checkpoint.string();
  j["checkpoint_a"] = c.checkpoint_a.string();
  j["checkpoint_b"] = c.checkpoint_b.string();
  j["image"] = c.image.string();
  j["seed"] = c.seed;
  j["image_size"] = c.image_size;
  j["augment"] = {{"factor", c.augment_factor}, {"mode", to_string(c.augment_mode)}};
  j["split"] = {{"train", c.split.train_fraction},
                {"val", c.split.val_fraction},
                {"test", c.split.test_fraction},
                {"stage", to_string(c.split.stage)}};
  j["model"] = {{"variant", to_string(c.model.variant)},
                {"channels", c.model.channels},
                {"num_blocks", c.model.num_blocks}};
  j["train"] = {{"batch_size", c.train.batch_size},   {"learning_rate", c.train.learning_rate},
                {"max_epochs", c.train.max_epochs},   {"patience", c.train.patience},
                {"monitor", to_string(c.train.monitor)}, {"alpha_mixup", c.train.mix.alpha_mixup},
                {"alpha_cutmix", c.train.mix.alpha_cutmix}};
  ordered_json ex = {{"method", to_string(c.explain.method)},
                     {"grid", c.explain.grid},
                     {"lime_samples", c.explain.lime_samples},
                     {"shap_samples", c.explain.shap_samples},
                     {"fill", to_string(c.explain.fill)}};
  ex["target_class"] = c.explain.target_class ? ordered_json(*c.explain.target_class) : ordered_json(nullptr);
  j["explain"] = ex;
  ordered_json grid = ordered_json::array();
  for (const auto& [am, ac] : c.sweep_grid) grid.push_back({am, ac});
  j["sweep"] = {{"grid", grid}};
  return j;
}

RunConfig config_from_json(const json& doc, RunConfig c) {
  std::vector<std::string> errors;
  Reader r(errors);
  if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
  r.check_keys(doc, "config", {"dataset", "out", "prepared", "checkpoint", "checkpoint_a", "checkpoint_b", "image",
                               "seed", "image_size", "augment", "split", "model", "train", "explain", "sweep"});
  const json* root = &doc;
  r.path(root, "dataset", "config", c.dataset);
  r.path(root, "out", "config", c.out);
  r.path(root, "prepared", "config", c.prepared);
  r.path(root, "checkpoint", "config", c.checkpoint);
  r.path(root, "checkpoint_a", "config", c.checkpoint_a);
  r.path(root, "checkpoint_b", "config", c.checkpoint_b);
  r.path(root, "image", "config", c.image);
  r.get(root, "seed", "config", c.seed);
  r.get(root, "image_size", "config", c.image_size);

  const json* aug = r.object(doc, "augment", "augment", {"factor", "mode"});
  r.get(aug, "factor", "augment", c.augment_factor);
  r.enumeration(aug, "mode", "augment", c.augment_mode, parse_augment_mode);

  const json* split = r.object(doc, "split", "split", {"train", "val", "test", "stage"});
  r.get(split, "train", "split", c.split.train_fraction);
  r.get(split, "val", "split", c.split.val_fraction);
  r.get(split, "test", "split", c.split.test_fraction);
  r.enumeration(split, "stage", "split", c.split.stage, parse_split_stage);

  const json* model = r.object(doc, "model", "model", {"variant", "channels", "num_blocks"});
  r.enumeration(model, "variant", "model", c.model.variant, parse_model_variant);
  if (model && model->contains("channels")) {
    const json& ch = model->at("channels");
    bool ok = ch.is_array();
    if (ok) {
      for (const auto& v : ch) ok = ok && v.is_number_unsigned();
    }
    if (ok) {
      c.model.channels = ch.get<std::vector<std::size_t>>();
    } else {
      r.error("model.channels: expected an array of non-negative integers");
    }
  }
  r.get(model, "num_blocks", "model", c.model.num_blocks);

  const json* train = r.object(doc, "train", "train",
                               {"batch_size", "learning_rate", "max_epochs", "patience", "monitor", "alpha_mixup",
                                "alpha_cutmix"});
  r.get(train, "batch_size", "train", c.train.batch_size);
  r.get(train, "learning_rate", "train", c.train.learning_rate);
  r.get(train, "max_epochs", "train", c.train.max_epochs);
  r.get(train, "patience", "train", c.train.patience);
  r.enumeration(train, "monitor", "train", c.train.monitor, parse_monitor);
  r.get(train, "alpha_mixup", "train", c.train.mix.alpha_mixup);
  r.get(train, "alpha_cutmix", "train", c.train.mix.alpha_cutmix);

  const json* ex = r.object(doc, "explain", "explain",
                            {"method", "grid", "lime_samples", "shap_samples", "fill", "target_class"});
  r.enumeration(ex, "method", "explain", c.explain.method, parse_explain_method);
  r.get(ex, "grid", "explain", c.explain.grid);
  r.get(ex, "lime_samples", "explain", c.explain.lime_samples);
  r.get(ex, "shap_samples", "explain", c.explain.shap_samples);
  r.enumeration(ex, "fill", "explain", c.explain.fill, parse_mask_fill);
  if (ex && ex->contains("target_class")) {
    const json& t = ex->at("target_class");
    if (t.is_null()) {
      c.explain.target_class.reset();
    } else if (t.is_number_unsigned()) {
      c.explain.target_class = t.get<std::size_t>();
    } else {
      r.error("explain.target_class: expected a non-negative integer or null");
    }
  }

  const json* sweep = r.object(doc, "sweep", "sweep", {"grid"});
  if (sweep && sweep->contains("grid")) {
    const json& g = sweep->at("grid");
    std::vector<std::pair<double, double>> grid;
    bool ok = g.is_array();
    if (ok) {
      for (const auto& p : g) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
          ok = false;
          break;
        }
        grid.emplace_back(p[0].get<double>(), p[1].get<double>());
      }
    }
    if (ok) {
      c.sweep_grid = std::move(grid);
    } else {
      r.error("sweep.grid: expected an array of [alpha_mixup, alpha_cutmix] pairs");
    }
  }

  if (!errors.empty()) {
    std::string msg = "invalid config file (" + std::to_string(errors.size()) + " problem" +
                      (errors.size() == 1 ? "" : "s") + "):";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return c;
}

RunConfig load_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

void write_resolved_config(const RunConfig& config, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream out(dir / "resolved_config.json", std::ios::binary);
  out << to_json(config).dump(2) << '\n';
  if (!out) throw DataError("cannot write '" + (dir / "resolved_config.json").string() + "'");
}

}  // namespace orchard::app
