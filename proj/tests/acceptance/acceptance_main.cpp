// Acceptance run: one PASS/FAIL line per criterion. Tolerances and time
// budgets are fixed below. Exit status counts failures that are not listed
// in kKnownFailures; known failures still print FAIL with their analysis.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "orchard/checkpoint.hpp"
#include "orchard/dataset.hpp"
#include "orchard/explain.hpp"
#include "orchard/gradcheck.hpp"
#include "orchard/metrics.hpp"
#include "orchard/mix.hpp"
#include "orchard/model.hpp"
#include "orchard/synthetic.hpp"
#include "orchard/trainer.hpp"

using namespace orchard;
namespace fs = std::filesystem;

namespace {

constexpr double kAccuracyTol = 5e-5;
constexpr double kLayerGradTol = 1e-3;
constexpr double kModelGradTol = 2e-3;
constexpr double kMixTol = 1e-6;
constexpr double kGradCamTol = 1e-5;
constexpr double kShapTol = 1e-4;
constexpr double kEfficiencyTol = 1e-6;
constexpr double kLimeMinR2 = 0.99;
constexpr double kInceptionMinAcc = 0.95;
constexpr double kResnetMinAcc = 0.90;

constexpr double kBudgetMetricsSec = 1.0;
constexpr double kBudgetGradSec = 60.0;
constexpr double kBudgetToySec = 900.0;

const std::map<int, std::string> kKnownFailures{
    {2, "published per-class cells follow truncation, not half-up rounding, and the matrix total is 379, "
        "so 358/377 cannot be the computed accuracy"}};

struct Outcome {
  bool pass = false;
  std::string detail;
};

const std::vector<std::vector<std::size_t>> kInceptionMatrix{{170, 0, 0}, {0, 118, 0}, {0, 7, 84}};
const std::vector<std::vector<std::size_t>> kResnetMatrix{{166, 0, 4}, {10, 106, 2}, {2, 3, 86}};
const std::vector<std::size_t> kSwap{1, 0};
const std::vector<std::string> kClassNames{"Anthracnose", "Fruit fly", "Healthy"};

std::string fmt(const char* format, double v) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[e.path().lexically_relative(root).generic_string()] = slurp(e.path());
  }
  return files;
}

fs::path workdir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "orchard_acceptance" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(ORCHARD_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Published cells: precision, recall, F1 per class.
using Cells = std::array<std::array<double, 3>, 3>;
const Cells kInceptionCells{{{1.00, 1.00, 1.00}, {0.94, 1.00, 0.97}, {1.00, 0.92, 0.96}}};
const Cells kResnetCells{{{0.93, 0.97, 0.95}, {0.97, 0.89, 0.93}, {0.93, 0.94, 0.93}}};

std::vector<std::string> cell_mismatches(const ClassMetrics& m, const Cells& cells,
                                         const std::function<double(double)>& round2) {
  static const char* kNames[3] = {"precision", "recall", "F1"};
  std::vector<std::string> out;
  for (std::size_t k = 0; k < 3; ++k) {
    const double v[3] = {m.per_class[k].precision, m.per_class[k].recall, m.per_class[k].f1};
    for (std::size_t j = 0; j < 3; ++j) {
      if (std::abs(round2(v[j]) - cells[k][j]) > 1e-9) {
        out.push_back(kClassNames[k] + " " + kNames[j] + " " + fmt("%.4f", v[j]) + " -> " +
                      fmt("%.2f", round2(v[j])) + " vs " + fmt("%.2f", cells[k][j]));
      }
    }
  }
  return out;
}

Outcome criterion1() {
  const ClassMetrics m = compute_metrics(confusion_from_counts(kInceptionMatrix, kClassNames));
  const auto misses = cell_mismatches(m, kInceptionCells, [](double v) { return round_half_up(v, 2); });
  const bool acc_ok = std::abs(m.accuracy - 0.9815) <= kAccuracyTol;
  Outcome o{acc_ok && misses.empty(), "accuracy " + fmt("%.6f", m.accuracy) + " (372/379), " +
                                          std::to_string(9 - misses.size()) + "/9 cells match under half-up"};
  for (const auto& s : misses) o.detail += "; " + s;
  return o;
}

Outcome criterion2() {
  const ConfusionMatrix cm = confusion_from_counts(kResnetMatrix, kClassNames);
  const ClassMetrics m = compute_metrics(cm);
  const auto half_up = cell_mismatches(m, kResnetCells, [](double v) { return round_half_up(v, 2); });
  const auto truncated = cell_mismatches(m, kResnetCells, [](double v) { return truncate_decimals(v, 2); });
  const double stated = 358.0 / 377.0;
  const bool acc_ok = std::abs(m.accuracy - stated) <= kAccuracyTol;
  const ReportAudit audit = audit_reported_figures(cm, 0.9446, 377);
  const bool flagged = !audit.consistent();

  Outcome o;
  o.pass = half_up.empty() && acc_ok && flagged;
  o.detail = std::to_string(9 - half_up.size()) + "/9 cells match under half-up";
  for (const auto& s : half_up) o.detail += "; " + s;
  o.detail += ". Computed accuracy " + fmt("%.4f", m.accuracy) + " = " + std::to_string(cm.trace()) + "/" +
              std::to_string(cm.total()) + ", expected 358/377 = " + fmt("%.4f", stated) + ". Truncation matches " +
              std::to_string(9 - truncated.size()) + "/9 cells. Audit " + (flagged ? "flags: " : "silent: ") +
              audit.note;
  return o;
}

// Criterion 3 is a substitution statement: it holds when 4-9 all pass.
Outcome criterion3(const std::map<int, Outcome>& results) {
  Outcome o{true, "full-scale pretrained targets not reproduced at desk scale; substitutes 4-9:"};
  for (int c = 4; c <= 9; ++c) {
    const bool ok = results.at(c).pass;
    o.pass = o.pass && ok;
    o.detail += std::string(" ") + std::to_string(c) + (ok ? "=PASS" : "=FAIL");
  }
  return o;
}

Outcome criterion4() {
  double worst_layer = 0.0, worst_model = 0.0;
  std::string worst_layer_name, worst_model_name;
  std::size_t checks = 0;
  auto layer = [&](const std::string& name, Layer& l, const Shape& in, std::uint64_t seed,
                   const GradCheckOptions& opt = {}) {
    const GradCheckReport r = gradient_check(l, in, seed, opt);
    ++checks;
    if (r.max_relative_error >= worst_layer) {
      worst_layer = r.max_relative_error;
      worst_layer_name = name + "/" + r.worst_tensor + " seed " + std::to_string(seed);
    }
  };
  ModelConfig tiny;
  tiny.input_height = tiny.input_width = 8;
  tiny.channels = {4};
  tiny.num_blocks = 1;
  tiny.num_classes = 2;
  ModelConfig proj = tiny;
  proj.channels = {4, 6};
  proj.num_blocks = 2;

  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Dense dense("fc", 6, 4);
    layer("dense", dense, {3, 6}, seed);
    Conv2d conv("conv", 2, 3, 3);
    layer("conv3x3", conv, {1, 2, 5, 5}, seed);
    Conv2d strided("conv_s2", 3, 4, 3, 2, 1);
    layer("conv3x3_s2", strided, {2, 3, 6, 6}, seed);
    Conv2d five("conv5x5", 2, 2, 5, 1, 2);
    layer("conv5x5", five, {1, 2, 4, 4}, seed);
    Conv2d pointwise("conv1x1", 3, 2, 1);
    layer("conv1x1", pointwise, {2, 3, 3, 3}, seed);
    Relu relu;
    GradCheckOptions away;
    away.min_abs_input = 0.1f;
    layer("relu", relu, {2, 3, 4, 4}, seed, away);
    MaxPool2d pool(2, 2);
    layer("maxpool", pool, {1, 2, 6, 6}, seed);
    MaxPool2d pool3(3, 1, 1);
    layer("maxpool3", pool3, {1, 2, 5, 5}, seed);
    GlobalAvgPool gap;
    layer("gap", gap, {2, 3, 4, 5}, seed);
    ModelGraph inc = build_mini_inception(tiny);
    layer("inception_block", inc.features().at(3), {1, 4, 4, 4}, seed);
    ModelGraph res = build_mini_resnet(proj);
    layer("residual_block", res.features().at(3), {1, 4, 4, 4}, seed);
    layer("residual_projection", res.features().at(4), {1, 4, 4, 4}, seed);

    for (auto [name, model] : {std::pair{"mini_inception", build_mini_inception(tiny)},
                               std::pair{"mini_resnet", build_mini_resnet(tiny)}}) {
      const GradCheckReport r = model_gradient_check(model, 2, seed);
      ++checks;
      if (r.max_relative_error >= worst_model) {
        worst_model = r.max_relative_error;
        worst_model_name = std::string(name) + "/" + r.worst_tensor + " seed " + std::to_string(seed);
      }
    }
  }
  return {worst_layer <= kLayerGradTol && worst_model <= kModelGradTol,
          std::to_string(checks) + " checks over 5 seeds; worst layer " + fmt("%.2e", worst_layer) + " (" +
              worst_layer_name + "), worst end-to-end " + fmt("%.2e", worst_model) + " (" + worst_model_name + ")"};
}

struct ToySet {
  LabeledImageSet train, val;
};

ToySet toy_set() {
  BlobSpec spec;  // 3 classes x 200 images, 64 x 64
  const DatasetSplits s = stratified_split(make_blob_dataset(spec), SplitSpec{});
  return {s.train, s.val};
}

bool same_history(const TrainHistory& a, const TrainHistory& b, std::size_t epochs) {
  if (a.epochs.size() < epochs || b.epochs.size() < epochs) return false;
  for (std::size_t e = 0; e < epochs; ++e) {
    const EpochStats &x = a.epochs[e], &y = b.epochs[e];
    if (x.train_loss != y.train_loss || x.train_accuracy != y.train_accuracy || x.val_loss != y.val_loss ||
        x.val_accuracy != y.val_accuracy) {
      return false;
    }
  }
  return true;
}

Outcome criterion5(const ToySet& toy) {
  TrainConfig cfg;  // batch 32, Adam lr 1e-4
  cfg.max_epochs = 30;
  cfg.seed = 0;
  auto run = [&](ModelVariant v, std::size_t epochs) {
    ModelConfig mc;
    mc.variant = v;
    ModelGraph m = build_model(mc);
    m.set_class_names(toy.train.classes);
    init_parameters(m, cfg.seed);
    TrainConfig c = cfg;
    c.max_epochs = epochs;
    return train(m, toy.train, toy.val, c);
  };
  const TrainResult inc = run(ModelVariant::mini_inception, 30);
  const TrainResult inc_again = run(ModelVariant::mini_inception, 30);
  const TrainResult res = run(ModelVariant::mini_resnet, 30);
  const TrainResult res_prefix = run(ModelVariant::mini_resnet, 2);

  const double inc_acc = evaluate(inc.model, toy.val).accuracy;
  const double res_acc = evaluate(res.model, toy.val).accuracy;
  const bool deterministic = same_history(inc.history, inc_again.history, inc.history.epochs.size()) &&
                             inc.history.epochs.size() == inc_again.history.epochs.size() &&
                             same_history(res.history, res_prefix.history, 2);
  return {inc_acc >= kInceptionMinAcc && res_acc >= kResnetMinAcc && deterministic,
          "600 blobs (480/120), val accuracy mini_inception " + fmt("%.4f", inc_acc) + " (best epoch " +
              std::to_string(inc.history.best_epoch) + "), mini_resnet " + fmt("%.4f", res_acc) + " (best epoch " +
              std::to_string(res.history.best_epoch) + "), rerun " + (deterministic ? "identical" : "DIFFERS")};
}

Outcome criterion6(const fs::path& dir) {
  std::vector<std::string> problems;
  // MixUp: 0.3 * 0.2 + 0.7 * 0.6 = 0.48; labels 0.3 / 0.7.
  {
    Tensor images({2, 1, 1, 1}, std::vector<float>{0.2f, 0.6f});
    Tensor labels({2, 3}, std::vector<float>{1, 0, 0, 0, 0, 1});
    const MixedBatch m = mixup(images, labels, 0.3, kSwap);
    const double want_img[2] = {0.48, 0.32};
    const double want_lab[6] = {0.3, 0, 0.7, 0.7, 0, 0.3};
    for (int i = 0; i < 2; ++i)
      if (std::abs(m.images[i] - want_img[i]) > kMixTol) problems.push_back("mixup pixel " + std::to_string(i));
    for (int i = 0; i < 6; ++i)
      if (std::abs(m.labels[i] - want_lab[i]) > kMixTol) problems.push_back("mixup label " + std::to_string(i));
  }
  // CutMix on 10 x 10: a 6 x 10 donor patch leaves 40% of the receiver.
  {
    Tensor images({2, 1, 10, 10});
    for (std::size_t i = 0; i < 100; ++i) {
      images[i] = 0.1f;
      images[100 + i] = 0.9f;
    }
    Tensor labels({2, 3}, std::vector<float>{0, 0, 1, 0, 1, 0});
    const MixedBatch m = cutmix_with_box(images, labels, CutMixBox{0, 0, 6, 10, 0.4}, kSwap);
    if (std::abs(m.labels[1] - 0.6) > kMixTol || std::abs(m.labels[2] - 0.4) > kMixTol) {
      problems.push_back("cutmix hand labels");
    }
    std::size_t donor = 0;
    for (std::size_t i = 0; i < 100; ++i) donor += m.images[i] == 0.9f;
    if (donor != 60) problems.push_back("cutmix donor pixels " + std::to_string(donor));
  }
  // Sampled boxes: label weight is exactly the retained pixel fraction.
  {
    Rng rng(7);
    std::size_t checked = 0;
    for (double lam : {0.1, 0.35, 0.5, 0.77, 0.93}) {
      for (std::size_t hw : {7u, 16u, 33u}) {
        Tensor images({2, 1, hw, hw});
        Tensor labels({2, 2}, std::vector<float>{1, 0, 0, 1});
        const MixedBatch m = cutmix(images, labels, lam, kSwap, rng);
        const double retained = 1.0 - static_cast<double>(m.box->area()) / static_cast<double>(hw * hw);
        if (m.lambda_used != retained || m.labels[0] != static_cast<float>(retained)) {
          problems.push_back("cutmix weight at lambda " + fmt("%.2f", lam));
        }
        ++checked;
      }
    }
  }
  // Both alphas zero: bit-identical passthrough.
  {
    Rng data_rng(3);
    Tensor images = random_uniform({4, 3, 8, 8}, 0, 1, data_rng);
    Tensor labels({4, 3}, std::vector<float>{1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 0, 0});
    Rng rng(1);
    const MixedBatch m = apply_mixers(images, labels, MixConfig{}, rng);
    if (!(m.images == images) || !(m.labels == labels) || m.applied != MixKind::none) {
      problems.push_back("alpha 0 is not a passthrough");
    }
  }
  // Five-point alpha grid through the command line on the toy set.
  BlobSpec spec;
  write_image_tree(make_blob_dataset(spec), dir / "tree");
  const int prep = run_cli("prepare --dataset " + q(dir / "tree") + " --out " + q(dir / "prep") +
                               " --image-size 64 --factor 1",
                           dir / "prepare.log");
  const int sweep = run_cli("sweep --prepared " + q(dir / "prep") + " --out " + q(dir / "sweep") +
                                " --model mini_inception --epochs 5",
                            dir / "sweep.log");
  std::size_t rows = 0;
  std::string header;
  {
    std::ifstream csv(dir / "sweep" / "sweep.csv");
    std::getline(csv, header);
    for (std::string line; std::getline(csv, line);) rows += !line.empty();
  }
  if (prep != 0 || sweep != 0) problems.push_back("cli exit codes " + std::to_string(prep) + "/" + std::to_string(sweep));
  if (rows != 5) problems.push_back("sweep.csv has " + std::to_string(rows) + " rows");
  if (header.rfind("alpha_mixup,alpha_cutmix,val_accuracy,val_loss", 0) != 0) problems.push_back("sweep.csv header");

  Outcome o{problems.empty(), "hand oracles, 15 sampled boxes, alpha-0 passthrough, sweep.csv rows " +
                                  std::to_string(rows)};
  for (const auto& p : problems) o.detail += "; " + p;
  return o;
}

Outcome criterion7(const fs::path& dir) {
  BlobSpec spec;
  spec.class_names = {"Anthracnose", "fruit_fly", "healthy_guava"};
  spec.class_counts = {211, 151, 111};
  spec.image_size = 16;
  write_image_tree(make_blob_dataset(spec), dir / "tree");
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "tree")) files += e.is_regular_file();
  const int code =
      run_cli("prepare --dataset " + q(dir / "tree") + " --out " + q(dir / "prep") + " --image-size 16",
              dir / "prepare.log");
  std::size_t total = 0;
  try {
    total = nlohmann::json::parse(slurp(dir / "prep" / "summary.json")).at("total").get<std::size_t>();
  } catch (const std::exception&) {
  }
  std::size_t rows = 0;
  std::ifstream manifest(dir / "prep" / "manifest.csv");
  for (std::string line; std::getline(manifest, line);) ++rows;
  const std::string log = slurp(dir / "prepare.log");
  const bool reported = log.find("prepared 3784 images") != std::string::npos;
  return {code == 0 && files == 473 && total == 3784 && rows == 3785 && reported,
          std::to_string(files) + " files -> summary total " + std::to_string(total) + ", manifest rows " +
              std::to_string(rows > 0 ? rows - 1 : 0) + ", exit " + std::to_string(code)};
}

double shapley_brute_force(std::size_t n, std::size_t i, const std::vector<double>& table) {
  std::vector<double> fact(n + 1, 1.0);
  for (std::size_t k = 1; k <= n; ++k) fact[k] = fact[k - 1] * static_cast<double>(k);
  double phi = 0.0;
  for (std::uint32_t s = 0; s < (1u << n); ++s) {
    if (s & (1u << i)) continue;
    const std::size_t k = static_cast<std::size_t>(__builtin_popcount(s));
    phi += fact[k] * fact[n - k - 1] / fact[n] * (table[s | (1u << i)] - table[s]);
  }
  return phi;
}

Outcome criterion8() {
  // Grad-CAM against the closed form of conv1x1 -> GAP -> dense.
  double cam_err = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const std::size_t k = 4, size = 6, classes = 3;
    ModelConfig cfg;
    cfg.variant = ModelVariant::custom;
    cfg.input_height = cfg.input_width = size;
    cfg.channels = {k};
    cfg.num_classes = classes;
    Sequential features;
    features.emplace<Conv2d>("feat.conv", 3, k, 1);
    Sequential head;
    head.emplace<GlobalAvgPool>();
    head.emplace<Dense>("head.dense", k, classes);
    ModelGraph m(cfg, features, head);
    Rng rng(seed);
    for (auto& p : m.params()) *p.value = random_uniform(p.value->shape(), -1, 1, rng);
    Tensor img = random_uniform({3, size, size}, 0, 1, rng);
    const std::size_t target = seed % classes;
    const Heatmap h = grad_cam(m, img, target);
    const auto& conv = dynamic_cast<const Conv2d&>(m.features().at(0));
    const auto& dense = dynamic_cast<const Dense&>(m.head().at(1));
    std::vector<double> cam(size * size);
    double peak = 0.0;
    for (std::size_t i = 0; i < size * size; ++i) {
      double acc = 0.0;
      for (std::size_t ch = 0; ch < k; ++ch) {
        double a = conv.bias()[ch];
        for (std::size_t c = 0; c < 3; ++c) a += conv.weights()[ch * 3 + c] * img[c * size * size + i];
        acc += dense.weights()[ch * classes + target] * a;
      }
      cam[i] = std::max(0.0, acc);
      peak = std::max(peak, cam[i]);
    }
    for (std::size_t i = 0; i < cam.size(); ++i) {
      cam_err = std::max(cam_err, std::abs(h.values[i] - (peak > 0 ? cam[i] / peak : 0.0)));
    }
  }

  // Kernel SHAP (exact) against subset enumeration.
  double shap_err = 0.0, efficiency = 0.0;
  Rng gen(9);
  std::uniform_int_distribution<std::size_t> players(1, 8);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  bool all_exact = true;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = players(gen);
    std::vector<double> table(1u << n);
    for (auto& t : table) t = val(gen);
    CoalitionBatchValue value = [&](const std::vector<KeepVector>& zs) {
      std::vector<double> out;
      for (const auto& z : zs) {
        std::uint32_t mask = 0;
        for (std::size_t s = 0; s < n; ++s) mask |= static_cast<std::uint32_t>(z[s] != 0) << s;
        out.push_back(table[mask]);
      }
      return out;
    };
    Rng rng(static_cast<std::uint64_t>(trial));
    const Attribution a = kernel_shap_fit(n, value, 0, rng);
    all_exact = all_exact && a.exact;
    for (std::size_t i = 0; i < n; ++i) shap_err = std::max(shap_err, std::abs(a.weights[i] - shapley_brute_force(n, i, table)));
    double sum = 0.0;
    for (double w : a.weights) sum += w;
    efficiency = std::max({efficiency, std::abs(a.efficiency_residual), std::abs(sum - (table.back() - table.front()))});
  }

  // LIME on an exactly linear target.
  const std::size_t s = 16;
  std::vector<double> coef(s);
  for (std::size_t i = 0; i < s; ++i) coef[i] = 0.05 * std::cos(static_cast<double>(i));
  CoalitionBatchValue linear = [&](const std::vector<KeepVector>& zs) {
    std::vector<double> out;
    for (const auto& z : zs) {
      double v = 0.1;
      for (std::size_t i = 0; i < s; ++i) v += coef[i] * z[i];
      out.push_back(v);
    }
    return out;
  };
  Rng lime_rng(5);
  const Attribution lime = lime_fit(s, linear, 1000, lime_rng);

  const bool pass = cam_err <= kGradCamTol && shap_err <= kShapTol && all_exact && efficiency <= kEfficiencyTol &&
                    lime.r2 >= kLimeMinR2;
  return {pass, "Grad-CAM max diff " + fmt("%.2e", cam_err) + ", SHAP vs enumeration " + fmt("%.2e", shap_err) +
                    " over 20 games, efficiency residual " + fmt("%.2e", efficiency) + ", LIME R^2 " +
                    fmt("%.6f", lime.r2)};
}

Outcome criterion9(const fs::path& toy_prepared, const fs::path& dir) {
  std::vector<std::string> problems;
  for (const char* variant : {"mini_inception", "mini_resnet"}) {
    const std::string v = variant;
    for (const char* run : {"a", "b"}) {
      const int code = run_cli("train --prepared " + q(toy_prepared) + " --out " + q(dir / (v + "_" + run)) +
                                   " --model " + v + " --epochs 2 --seed 11",
                               dir / (v + "_" + run + ".log"));
      if (code != 0) problems.push_back(v + " train exit " + std::to_string(code));
    }
    if (slurp(dir / (v + "_a") / "history.csv") != slurp(dir / (v + "_b") / "history.csv") ||
        slurp(dir / (v + "_a") / "history.csv").empty()) {
      problems.push_back(v + " history.csv differs");
    }
    const auto ca = tree_bytes(dir / (v + "_a") / "checkpoint");
    if (ca.empty() || ca != tree_bytes(dir / (v + "_b") / "checkpoint")) problems.push_back(v + " checkpoint differs");

    LoadedCheckpoint loaded = load_checkpoint(dir / (v + "_a") / "checkpoint");
    save_checkpoint(loaded.model, loaded.adam ? &*loaded.adam : nullptr, dir / (v + "_resaved"));
    if (tree_bytes(dir / (v + "_resaved")) != ca) problems.push_back(v + " save-load-save differs");

    ModelConfig mc;
    mc.variant = v == "mini_inception" ? ModelVariant::mini_inception : ModelVariant::mini_resnet;
    mc.input_height = mc.input_width = 32;
    ModelGraph fresh = build_model(mc);
    init_parameters(fresh, 4);
    save_checkpoint(fresh, nullptr, dir / (v + "_fresh"));
    const ModelGraph back = load_checkpoint(dir / (v + "_fresh")).model;
    Rng rng(2);
    const Tensor batch = random_uniform({3, 3, 32, 32}, 0, 1, rng);
    if (!(fresh.forward(batch) == back.forward(batch))) problems.push_back(v + " forward differs after load");
  }
  Outcome o{problems.empty(), "history.csv and checkpoint bytes identical across reruns, save-load-save identical, "
                              "forward outputs bitwise equal after load (both variants)"};
  if (!problems.empty()) o.detail = "problems:";
  for (const auto& p : problems) o.detail += " " + p + ";";
  return o;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main() {
  std::map<int, Outcome> results;
  std::map<int, double> elapsed;
  auto timed = [&](int id, const std::function<Outcome()>& fn, double budget) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    elapsed[id] = seconds_since(t0);
    if (budget > 0 && elapsed[id] > budget) {
      o.pass = false;
      o.detail += "; over time budget " + fmt("%.0f s", budget);
    }
    results[id] = o;
  };

  timed(1, criterion1, kBudgetMetricsSec);
  timed(2, criterion2, kBudgetMetricsSec);
  timed(4, criterion4, kBudgetGradSec);
  const ToySet toy = toy_set();
  timed(5, [&] { return criterion5(toy); }, kBudgetToySec);
  const fs::path sweep_dir = workdir("c6");
  timed(6, [&] { return criterion6(sweep_dir); }, 0);
  timed(7, [&] { return criterion7(workdir("c7")); }, 0);
  timed(8, criterion8, 0);
  timed(9, [&] { return criterion9(sweep_dir / "prep", workdir("c9")); }, 0);
  elapsed[3] = 0.0;
  results[3] = criterion3(results);

  int unexpected = 0;
  for (const auto& [id, o] : results) {
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << "  [" << fmt("%.1f s", elapsed[id]) << "]  "
              << o.detail << "\n";
    const bool known = kKnownFailures.count(id) > 0;
    if (!o.pass && known) std::cout << "      known failure: " << kKnownFailures.at(id) << "\n";
    if (o.pass && known) std::cout << "      note: listed as a known failure but passed\n";
    if (!o.pass && !known) ++unexpected;
  }
  std::cout << (unexpected == 0 ? "acceptance: no unexpected failures" : "acceptance: unexpected failures") << "\n";
  return unexpected;
}
