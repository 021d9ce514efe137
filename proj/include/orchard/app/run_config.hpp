#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "orchard/dataset.hpp"
#include "orchard/explain.hpp"
#include "orchard/model.hpp"
#include "orchard/trainer.hpp"

namespace orchard::app {

enum class Command { prepare, train, evaluate, explain, sweep, compare };

std::string to_string(Command c);

enum class ExplainMethod { gradcam, lime, shap, all };

std::string to_string(ExplainMethod m);
ExplainMethod parse_explain_method(const std::string& text);

struct ExplainSettings {
  ExplainMethod method = ExplainMethod::all;
  std::size_t grid = 4;
  std::size_t lime_samples = 500;
  std::size_t shap_samples = 1024;  // used only past the exact-enumeration limit
  MaskFill fill = MaskFill::mean_color;
  std::optional<std::size_t> target_class;  // predicted class when unset
};

struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path out = "out";
  std::filesystem::path prepared;
  std::filesystem::path checkpoint;
  std::filesystem::path checkpoint_a;
  std::filesystem::path checkpoint_b;
  std::filesystem::path image;

  std::uint64_t seed = 0;
  std::size_t image_size = 256;
  std::size_t augment_factor = 8;
  AugmentMode augment_mode = AugmentMode::deterministic_bank;
  SplitSpec split;
  // Input size and class count are filled from the prepared data.
  ModelConfig model;
  TrainConfig train;
  ExplainSettings explain;
  std::vector<std::pair<double, double>> sweep_grid{{0.0, 0.0}, {0.2, 0.3}, {0.25, 0.4}, {0.3, 0.5}, {0.35, 0.6}};

  /// Copies the run seed into the split, training and mixing seeds.
  void propagate_seed();
  /// Every problem for the given command, including missing input paths.
  std::vector<std::string> validation_errors(Command command) const;
  /// Throws ConfigError listing all problems.
  void validate(Command command) const;
};

nlohmann::ordered_json to_json(const RunConfig& config);
/// Reads the keys present in `doc` over the defaults in `base`. Unknown keys
/// and type mismatches are collected and thrown together as one ConfigError.
RunConfig config_from_json(const nlohmann::json& doc, RunConfig base = {});
RunConfig load_config_file(const std::filesystem::path& path);
void write_resolved_config(const RunConfig& config, const std::filesystem::path& dir);

}  // namespace orchard::app
