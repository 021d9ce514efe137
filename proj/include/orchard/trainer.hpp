#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "orchard/dataset.hpp"
#include "orchard/mix.hpp"
#include "orchard/model.hpp"
#include "orchard/optim.hpp"

namespace orchard {

enum class Monitor { val_loss, val_accuracy };
std::string to_string(Monitor m);
Monitor parse_monitor(const std::string& text);

struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  std::size_t max_epochs = 60;
  std::size_t patience = 10;
  MixConfig mix;
  std::uint64_t seed = 0;
  Monitor monitor = Monitor::val_loss;

  std::vector<std::string> validation_errors() const;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  std::size_t stopped_epoch = 0;

  const EpochStats& best() const { return epochs.at(best_epoch - 1); }
};

struct TrainResult {
  ModelGraph model;  // parameters of the best epoch
  AdamState adam;    // optimizer state at the best epoch
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mean cross-entropy and accuracy of the unmixed set, in batches.
struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};
Evaluation evaluate(const ModelGraph& model, const LabeledImageSet& set, std::size_t batch_size = 32);

/// N x C class probabilities for every record, in record order.
Tensor predict_probs(const ModelGraph& model, const LabeledImageSet& set, std::size_t batch_size = 32);

/// Seeded shuffling, mixing per batch, Adam updates, validation each epoch,
/// early stopping on the monitor with strict improvement.
TrainResult train(ModelGraph model, const LabeledImageSet& train_set, const LabeledImageSet& val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);

struct SweepRow {
  double alpha_mixup = 0.0;
  double alpha_cutmix = 0.0;
  double val_accuracy = 0.0;
  double val_loss = 0.0;
  std::size_t best_epoch = 0;
};

/// One training run per grid point, all starting from `initial` with the base seed.
std::vector<SweepRow> alpha_sweep(const ModelGraph& initial, const LabeledImageSet& train_set,
                                  const LabeledImageSet& val_set, const TrainConfig& base,
                                  const std::vector<std::pair<double, double>>& grid);

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

}  // namespace orchard
