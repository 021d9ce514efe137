#include "orchard/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "orchard/errors.hpp"
#include "orchard/ops.hpp"

namespace orchard {

std::string to_string(Monitor m) { return m == Monitor::val_loss ? "val_loss" : "val_accuracy"; }

Monitor parse_monitor(const std::string& text) {
  if (text == "val_loss") return Monitor::val_loss;
  if (text == "val_accuracy") return Monitor::val_accuracy;
  throw ConfigError("unknown monitor '" + text + "' (expected val_loss or val_accuracy)");
}

std::vector<std::string> TrainConfig::validation_errors() const {
  std::vector<std::string> errors;
  if (batch_size < 1) errors.push_back("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) errors.push_back("learning_rate must be > 0");
  if (max_epochs < 1) errors.push_back("max_epochs must be >= 1");
  for (auto& e : mix.validation_errors()) errors.push_back(e);
  return errors;
}

namespace {

std::size_t hard_class(const Tensor& rows, std::size_t i) {
  const std::size_t c = rows.dim(1);
  return argmax(std::span<const float>(rows.raw() + i * c, c));
}

void check_compatible(const ModelGraph& model, const LabeledImageSet& set, const char* role) {
  if (set.size() == 0) throw DataError(std::string(role) + " set is empty");
  if (set.num_classes() != model.num_classes()) {
    throw ConfigError(std::string(role) + " set has " + std::to_string(set.num_classes()) + " classes, model has " +
                      std::to_string(model.num_classes()));
  }
}

}  // namespace

Tensor predict_probs(const ModelGraph& model, const LabeledImageSet& set, std::size_t batch_size) {
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t c = model.num_classes();
  Tensor out({set.size(), c});
  Tensor images, labels;
  for (std::size_t first = 0; first < set.size(); first += batch_size) {
    const std::size_t n = std::min(batch_size, set.size() - first);
    stack_batch(set, order, first, n, images, labels);
    Tensor p = model.forward(images);
    std::copy(p.raw(), p.raw() + n * c, out.raw() + first * c);
  }
  return out;
}

Evaluation evaluate(const ModelGraph& model, const LabeledImageSet& set, std::size_t batch_size) {
  check_compatible(model, set, "evaluation");
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  Tensor images, labels;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t first = 0; first < set.size(); first += batch_size) {
    const std::size_t n = std::min(batch_size, set.size() - first);
    stack_batch(set, order, first, n, images, labels);
    Tensor p = model.forward(images);
    loss_sum += cross_entropy(p, labels) * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) correct += hard_class(p, i) == hard_class(labels, i);
  }
  const double total = static_cast<double>(set.size());
  return {loss_sum / total, static_cast<double>(correct) / total};
}

TrainResult train(ModelGraph model, const LabeledImageSet& train_set, const LabeledImageSet& val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  const auto errors = config.validation_errors();
  if (!errors.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  check_compatible(model, train_set, "training");
  check_compatible(model, val_set, "validation");

  Rng shuffle_rng(derive_seed(config.seed, 0));
  Rng mix_rng(derive_seed(config.mix.seed, 1));
  AdamState adam;
  std::vector<ParamRef> params = model.params();
  adam.reset(params);

  TrainResult result{model, adam, {}};
  double best_score = std::numeric_limits<double>::infinity();
  std::size_t wait = 0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  Tensor images, labels;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0, batch_index = 0;
    for (std::size_t first = 0; first < order.size(); first += config.batch_size, ++batch_index) {
      const std::size_t n = std::min(config.batch_size, order.size() - first);
      stack_batch(train_set, order, first, n, images, labels);
      MixedBatch batch = apply_mixers(images, labels, config.mix, mix_rng);
      model.zero_grad();
      Tensor logits = model.train_forward(batch.images);
      Tensor probs = softmax(logits);
      const double loss = cross_entropy(probs, batch.labels);
      if (!std::isfinite(loss)) {
        throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index + 1));
      }
      model.backward(softmax_cross_entropy_backward(probs, batch.labels));
      adam_step(params, adam, config.learning_rate);
      loss_sum += loss * static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) correct += hard_class(probs, i) == hard_class(batch.labels, i);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    const Evaluation val = evaluate(model, val_set, config.batch_size);
    stats.val_loss = val.loss;
    stats.val_accuracy = val.accuracy;
    if (!std::isfinite(stats.val_loss)) {
      throw NumericError("training diverged: non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.history.epochs.push_back(stats);
    result.history.stopped_epoch = epoch;
    if (on_epoch) on_epoch(stats);

    const double score = config.monitor == Monitor::val_loss ? stats.val_loss : -stats.val_accuracy;
    if (score < best_score) {
      best_score = score;
      wait = 0;
      result.history.best_epoch = epoch;
      result.model = model;
      result.adam = adam;
    } else if (++wait >= config.patience) {
      break;
    }
  }
  return result;
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  char line[160];
  for (const auto& e : history.epochs) {
    std::snprintf(line, sizeof(line), "%zu,%.9g,%.9g,%.9g,%.9g\n", e.epoch, e.train_loss, e.train_accuracy,
                  e.val_loss, e.val_accuracy);
    out << line;
  }
}

std::vector<SweepRow> alpha_sweep(const ModelGraph& initial, const LabeledImageSet& train_set,
                                  const LabeledImageSet& val_set, const TrainConfig& base,
                                  const std::vector<std::pair<double, double>>& grid) {
  if (grid.empty()) throw ConfigError("alpha sweep grid is empty");
  std::vector<SweepRow> rows;
  for (const auto& [a_mix, a_cut] : grid) {
    TrainConfig cfg = base;
    cfg.mix.alpha_mixup = a_mix;
    cfg.mix.alpha_cutmix = a_cut;
    const std::string point = "grid point (alpha_mixup=" + std::to_string(a_mix) +
                              ", alpha_cutmix=" + std::to_string(a_cut) + "): ";
    try {
      TrainResult r = train(initial, train_set, val_set, cfg);
      const EpochStats& best = r.history.best();
      rows.push_back({a_mix, a_cut, best.val_accuracy, best.val_loss, r.history.best_epoch});
    } catch (const ConfigError& e) {
      throw ConfigError(point + e.what());
    } catch (const NumericError& e) {
      throw NumericError(point + e.what());
    } catch (const DataError& e) {
      throw DataError(point + e.what());
    }
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "alpha_mixup,alpha_cutmix,val_accuracy,val_loss,best_epoch\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%.9g,%.9g,%.9g,%.9g,%zu\n", r.alpha_mixup, r.alpha_cutmix, r.val_accuracy,
                  r.val_loss, r.best_epoch);
    out << line;
  }
}

}  // namespace orchard
