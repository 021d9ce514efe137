#include "orchard/app/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>

#include "CLI11.hpp"
#include "json.hpp"
#include "orchard/app/prepared.hpp"
#include "orchard/checkpoint.hpp"
#include "orchard/errors.hpp"
#include "orchard/explain.hpp"
#include "orchard/image_io.hpp"
#include "orchard/metrics.hpp"
#include "orchard/trainer.hpp"

namespace orchard::app {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

// Prepared image size drives the model input size.
RunConfig with_prepared_size(RunConfig config) {
  if (!config.prepared.empty() && fs::is_regular_file(config.prepared / "summary.json")) {
    config.image_size = read_prepare_summary(config.prepared).image_size;
  }
  return config;
}

ModelGraph fresh_model(const RunConfig& config, const PrepareSummary& summary) {
  ModelConfig m = config.model;
  m.input_height = m.input_width = summary.image_size;
  m.num_classes = summary.classes.size();
  ModelGraph model = build_model(m);
  model.set_class_names(summary.classes);
  init_parameters(model, config.seed);
  return model;
}

struct EvalSplit {
  std::string name;
  const LabeledImageSet* set = nullptr;
};

// Held-out test images when the split has any, validation images otherwise.
EvalSplit evaluation_split(const PreparedData& data) {
  if (data.splits.test.size() > 0) return {"test", &data.splits.test};
  return {"val", &data.splits.val};
}

ModelGraph load_model_for(const fs::path& checkpoint, const PrepareSummary& summary) {
  ModelGraph model = load_checkpoint(checkpoint).model;
  const auto& cfg = model.config();
  if (cfg.input_height != summary.image_size || cfg.input_width != summary.image_size) {
    throw DataError("checkpoint '" + checkpoint.string() + "' expects " + std::to_string(cfg.input_height) + "x" +
                    std::to_string(cfg.input_width) + " inputs but the prepared images are " +
                    std::to_string(summary.image_size) + "x" + std::to_string(summary.image_size));
  }
  return model;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write '" + path.string() + "'");
}

ordered_json attribution_json(const Attribution& a) {
  ordered_json j;
  j["weights"] = a.weights;
  j["evaluations"] = a.evaluations;
  return j;
}

}  // namespace

void cmd_prepare(const RunConfig& config, std::ostream& out) {
  config.validate(Command::prepare);
  fs::create_directories(config.out);
  const PrepareSummary s = prepare_dataset(config, config.out);
  write_resolved_config(config, config.out);
  out << "prepared " << s.total << " images (" << s.originals << " originals x " << s.augment_factor
      << ") at " << s.image_size << "x" << s.image_size << ": train " << s.split_total(0) << ", val "
      << s.split_total(1) << ", test " << s.split_total(2) << "\n";
}

void cmd_train(const RunConfig& raw, std::ostream& out) {
  const RunConfig config = with_prepared_size(raw);
  config.validate(Command::train);
  const PreparedData data = load_prepared(config.prepared);
  if (data.splits.val.size() == 0) throw DataError("prepared data has an empty validation split");
  ModelGraph model = fresh_model(config, data.summary);
  fs::create_directories(config.out);
  write_resolved_config(config, config.out);

  out << "training " << to_string(config.model.variant) << " (" << model.parameter_count() << " parameters) on "
      << data.splits.train.size() << " images, validating on " << data.splits.val.size() << "\n";
  const std::size_t max_epochs = config.train.max_epochs;
  TrainResult result = train(model, data.splits.train, data.splits.val, config.train, [&](const EpochStats& e) {
    out << "epoch " << e.epoch << "/" << max_epochs << "  train_loss " << fmt("%.4f", e.train_loss)
        << "  train_acc " << fmt("%.4f", e.train_accuracy) << "  val_loss " << fmt("%.4f", e.val_loss)
        << "  val_acc " << fmt("%.4f", e.val_accuracy) << "\n";
  });
  save_checkpoint(result.model, &result.adam, config.out / "checkpoint");
  write_history_csv(result.history, config.out / "history.csv");
  const EpochStats& best = result.history.best();
  out << "best epoch " << result.history.best_epoch << " (val_loss " << fmt("%.4f", best.val_loss) << ", val_acc "
      << fmt("%.4f", best.val_accuracy) << "), stopped after epoch " << result.history.stopped_epoch << "\n";
}

void cmd_evaluate(const RunConfig& raw, std::ostream& out) {
  const RunConfig config = with_prepared_size(raw);
  config.validate(Command::evaluate);
  const PreparedData data = load_prepared(config.prepared);
  const ModelGraph model = load_model_for(config.checkpoint, data.summary);
  const EvalSplit split = evaluation_split(data);
  const EvaluationReport report = evaluate_model(model, *split.set, config.train.batch_size);
  fs::create_directories(config.out);
  write_resolved_config(config, config.out);
  write_confusion_csv(report.confusion, config.out / "confusion.csv");
  write_metrics_json(report.metrics, config.out / "metrics.json");
  write_predictions_csv(report, config.out / "predictions.csv");
  out << "evaluated " << to_string(model.config().variant) << " on the " << split.name << " split ("
      << report.metrics.total << " images): accuracy " << fmt("%.4f", report.metrics.accuracy) << "\n";
  for (std::size_t c = 0; c < report.metrics.class_names.size(); ++c) {
    const ClassScore& s = report.metrics.per_class[c];
    out << "  " << report.metrics.class_names[c] << "  precision " << fmt("%.2f", round_half_up(s.precision, 2))
        << "  recall " << fmt("%.2f", round_half_up(s.recall, 2)) << "  f1 " << fmt("%.2f", round_half_up(s.f1, 2))
        << "  support " << s.support << "\n";
  }
}

void cmd_explain(const RunConfig& config, std::ostream& out) {
  config.validate(Command::explain);
  const ModelGraph model = load_checkpoint(config.checkpoint).model;
  const std::size_t h = model.config().input_height, w = model.config().input_width;
  const Tensor image = resize_bilinear(to_tensor(decode_image(config.image)), h, w);
  const ExplainSettings& ex = config.explain;
  if (ex.grid > std::min(h, w)) {
    throw ConfigError("explain.grid " + std::to_string(ex.grid) + " exceeds the model input size");
  }
  const Prediction pred = predict_class(model, image);
  const std::size_t target = ex.target_class.value_or(pred.class_index);
  if (target >= model.num_classes()) {
    throw ConfigError("explain.target_class " + std::to_string(target) + " is out of range for " +
                      std::to_string(model.num_classes()) + " classes");
  }
  const auto& names = model.class_names();
  fs::create_directories(config.out);
  write_resolved_config(config, config.out);
  const std::string stem = config.image.stem().string();
  const bool all = ex.method == ExplainMethod::all;

  ordered_json doc;
  doc["image"] = config.image.filename().string();
  doc["model"] = to_string(model.config().variant);
  doc["predicted_class"] = names.at(pred.class_index);
  doc["target_class"] = names.at(target);
  ordered_json probs;
  for (std::size_t c = 0; c < names.size(); ++c) probs[names[c]] = pred.probs[c];
  doc["probabilities"] = probs;

  if (all || ex.method == ExplainMethod::gradcam) {
    const Heatmap heat = grad_cam(model, image, target);
    const std::string file = stem + ".gradcam.png";
    render_overlay(image, heat, config.out / file);
    doc["gradcam"] = {{"file", file}};
    out << "wrote " << (config.out / file).string() << "\n";
  }
  const Segmentation seg = grid_segments(image, ex.grid);
  if (all || ex.method == ExplainMethod::lime) {
    Rng rng(derive_seed(config.seed, 0));
    CoalitionBatchValue value = model_coalition_value(model, image, seg, target, ex.fill);
    const Attribution a = lime_fit(seg.count, value, ex.lime_samples, rng);
    const std::string file = stem + ".lime.png";
    render_overlay(image, seg, a, config.out / file);
    ordered_json j = {{"file", file}, {"segments", seg.count}};
    j.update(attribution_json(a));
    j["intercept"] = a.intercept;
    j["r2"] = a.r2;
    doc["lime"] = j;
    out << "wrote " << (config.out / file).string() << " (R^2 " << fmt("%.4f", a.r2) << ")\n";
  }
  if (all || ex.method == ExplainMethod::shap) {
    Rng rng(derive_seed(config.seed, 1));
    CoalitionBatchValue value = model_coalition_value(model, image, seg, target, ex.fill);
    const Attribution a = kernel_shap_fit(seg.count, value, ex.shap_samples, rng);
    const std::string file = stem + ".shap.png";
    render_overlay(image, seg, a, config.out / file);
    ordered_json j = {{"file", file}, {"segments", seg.count}};
    j.update(attribution_json(a));
    j["base_value"] = a.base_value;
    j["full_value"] = a.full_value;
    j["efficiency_residual"] = a.efficiency_residual;
    j["exact"] = a.exact;
    doc["shap"] = j;
    out << "wrote " << (config.out / file).string() << " (efficiency residual "
        << fmt("%.3g", a.efficiency_residual) << ")\n";
  }
  write_text(config.out / "attributions.json", doc.dump(2) + "\n");
  out << "wrote " << (config.out / "attributions.json").string() << "\n";
}

void cmd_sweep(const RunConfig& raw, std::ostream& out) {
  const RunConfig config = with_prepared_size(raw);
  config.validate(Command::sweep);
  const PreparedData data = load_prepared(config.prepared);
  if (data.splits.val.size() == 0) throw DataError("prepared data has an empty validation split");
  const ModelGraph initial = fresh_model(config, data.summary);
  fs::create_directories(config.out);
  write_resolved_config(config, config.out);
  const auto rows = alpha_sweep(initial, data.splits.train, data.splits.val, config.train, config.sweep_grid);
  write_sweep_csv(rows, config.out / "sweep.csv");
  out << "alpha_mixup  alpha_cutmix  val_accuracy  val_loss  best_epoch\n";
  for (const auto& r : rows) {
    out << fmt("%11.2f", r.alpha_mixup) << "  " << fmt("%12.2f", r.alpha_cutmix) << "  "
        << fmt("%12.4f", r.val_accuracy) << "  " << fmt("%8.4f", r.val_loss) << "  " << r.best_epoch << "\n";
  }
}

void cmd_compare(const RunConfig& raw, std::ostream& out) {
  const RunConfig config = with_prepared_size(raw);
  config.validate(Command::compare);
  const PreparedData data = load_prepared(config.prepared);
  const ModelGraph a = load_model_for(config.checkpoint_a, data.summary);
  const ModelGraph b = load_model_for(config.checkpoint_b, data.summary);
  const EvalSplit split = evaluation_split(data);
  const ClassMetrics ma = evaluate_model(a, *split.set, config.train.batch_size).metrics;
  const ClassMetrics mb = evaluate_model(b, *split.set, config.train.batch_size).metrics;
  const std::string la = to_string(a.config().variant) + " (A)";
  const std::string lb = to_string(b.config().variant) + " (B)";

  auto cell = [](double v) { return fmt("%.2f", round_half_up(v, 2)); };
  std::string md = "# Model comparison\n\n";
  md += "A: " + la + ", checkpoint `" + config.checkpoint_a.string() + "`\n";
  md += "B: " + lb + ", checkpoint `" + config.checkpoint_b.string() + "`\n\n";
  md += "Evaluated on the " + split.name + " split (" + std::to_string(ma.total) + " images).\n\n";
  md += "| Class | " + la + " precision | " + la + " recall | " + la + " F1 | " + lb + " precision | " + lb +
        " recall | " + lb + " F1 |\n";
  md += "|---|---|---|---|---|---|---|\n";
  for (std::size_t c = 0; c < ma.class_names.size(); ++c) {
    const ClassScore& x = ma.per_class[c];
    const ClassScore& y = mb.per_class[c];
    md += "| " + ma.class_names[c] + " | " + cell(x.precision) + " | " + cell(x.recall) + " | " + cell(x.f1) +
          " | " + cell(y.precision) + " | " + cell(y.recall) + " | " + cell(y.f1) + " |\n";
  }
  md += "\n| Model | Accuracy |\n|---|---|\n";
  md += "| " + la + " | " + fmt("%.2f%%", round_half_up(100.0 * ma.accuracy, 2)) + " |\n";
  md += "| " + lb + " | " + fmt("%.2f%%", round_half_up(100.0 * mb.accuracy, 2)) + " |\n";

  fs::create_directories(config.out);
  write_resolved_config(config, config.out);
  write_text(config.out / "compare.md", md);
  out << "accuracy " << la << " " << fmt("%.4f", ma.accuracy) << ", " << lb << " " << fmt("%.4f", mb.accuracy)
      << "\nwrote " << (config.out / "compare.md").string() << "\n";
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"orchard: image classification toolkit (prepare, train, evaluate, explain, sweep, compare)"};
  app.name("orchard");
  app.require_subcommand(1);

  std::string config_path, dataset, out_dir, prepared, checkpoint, checkpoint_a, checkpoint_b, image;
  std::string model, method;
  std::uint64_t seed = 0;
  double alpha_mixup = 0.0, alpha_cutmix = 0.0, lr = 0.0;
  std::size_t epochs = 0, patience = 0, image_size = 0, factor = 0, batch_size = 0, grid = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration; flags override it")
                         ->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory");
  };
  auto add_prepared = [&](CLI::App* sub) {
    sub->add_option("--prepared", prepared, "directory written by prepare");
  };
  auto add_training = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "run seed");
    sub->add_option("--model", model, "model variant")
                        ->check(CLI::IsMember({"mini_inception", "mini_resnet"}));
    sub->add_option("--epochs", epochs, "maximum epochs");
    sub->add_option("--patience", patience, "early stopping patience");
    sub->add_option("--batch-size", batch_size, "mini-batch size");
    sub->add_option("--lr", lr, "Adam learning rate");
  };

  auto* prepare = app.add_subcommand("prepare", "load, resize, augment and split an image tree");
  add_common(prepare);
  prepare->add_option("--dataset", dataset, "root/<class>/<image> tree");
  prepare->add_option("--seed", seed, "run seed");
  prepare->add_option("--image-size", image_size, "square resize target");
  prepare->add_option("--factor", factor, "augmentation factor (copies per original)");

  auto* train_cmd = app.add_subcommand("train", "train a model on prepared data");
  add_common(train_cmd);
  add_prepared(train_cmd);
  add_training(train_cmd);
  train_cmd->add_option("--alpha-mixup", alpha_mixup, "MixUp Beta alpha (0 disables)");
  train_cmd->add_option("--alpha-cutmix", alpha_cutmix, "CutMix Beta alpha (0 disables)");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "confusion matrix and per-class metrics for a checkpoint");
  add_common(evaluate_cmd);
  add_prepared(evaluate_cmd);
  evaluate_cmd->add_option("--checkpoint", checkpoint, "checkpoint directory");

  auto* explain_cmd = app.add_subcommand("explain", "Grad-CAM, LIME and Kernel SHAP overlays for one image");
  add_common(explain_cmd);
  explain_cmd->add_option("--checkpoint", checkpoint, "checkpoint directory");
  explain_cmd->add_option("--image", image, "PNG or JPEG image");
  explain_cmd->add_option("--method", method, "explanation method")
                       ->check(CLI::IsMember({"gradcam", "lime", "shap", "all"}));
  explain_cmd->add_option("--seed", seed, "sampling seed");
  explain_cmd->add_option("--grid", grid, "superpixel grid size (g x g tiles)");

  auto* sweep_cmd = app.add_subcommand("sweep", "train once per (alpha_mixup, alpha_cutmix) grid point");
  add_common(sweep_cmd);
  add_prepared(sweep_cmd);
  add_training(sweep_cmd);

  auto* compare_cmd = app.add_subcommand("compare", "per-class metrics of two checkpoints side by side");
  add_common(compare_cmd);
  add_prepared(compare_cmd);
  compare_cmd->add_option("--checkpoint-a", checkpoint_a, "first checkpoint directory");
  compare_cmd->add_option("--checkpoint-b", checkpoint_b, "second checkpoint directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  auto given = [&](const std::string& name) {
    const CLI::Option* opt = sub->get_option_no_throw("--" + name);
    return opt && opt->count() > 0;
  };
  try {
    RunConfig config = given("config") ? load_config_file(config_path) : RunConfig{};
    if (given("dataset")) config.dataset = dataset;
    if (given("out")) config.out = out_dir;
    if (given("prepared")) config.prepared = prepared;
    if (given("checkpoint")) config.checkpoint = checkpoint;
    if (given("checkpoint-a")) config.checkpoint_a = checkpoint_a;
    if (given("checkpoint-b")) config.checkpoint_b = checkpoint_b;
    if (given("image")) config.image = image;
    if (given("seed")) config.seed = seed;
    if (given("model")) config.model.variant = parse_model_variant(model);
    if (given("alpha-mixup")) config.train.mix.alpha_mixup = alpha_mixup;
    if (given("alpha-cutmix")) config.train.mix.alpha_cutmix = alpha_cutmix;
    if (given("epochs")) config.train.max_epochs = epochs;
    if (given("patience")) config.train.patience = patience;
    if (given("batch-size")) config.train.batch_size = batch_size;
    if (given("lr")) config.train.learning_rate = lr;
    if (given("image-size")) config.image_size = image_size;
    if (given("factor")) config.augment_factor = factor;
    if (given("method")) config.explain.method = parse_explain_method(method);
    if (given("grid")) config.explain.grid = grid;
    config.propagate_seed();

    const std::string name = sub->get_name();
    if (name == "prepare") cmd_prepare(config, out);
    else if (name == "train") cmd_train(config, out);
    else if (name == "evaluate") cmd_evaluate(config, out);
    else if (name == "explain") cmd_explain(config, out);
    else if (name == "sweep") cmd_sweep(config, out);
    else cmd_compare(config, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace orchard::app
