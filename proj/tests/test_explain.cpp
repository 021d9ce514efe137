#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "orchard/errors.hpp"
#include "orchard/explain.hpp"

using namespace orchard;
namespace fs = std::filesystem;

namespace {

// Brute-force Shapley values by subset enumeration.
std::vector<double> shapley_oracle(std::size_t n, const std::function<double(std::uint32_t)>& v) {
  std::vector<double> fact(n + 1, 1.0);
  for (std::size_t i = 1; i <= n; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
  std::vector<double> phi(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint32_t s = 0; s < (1u << n); ++s) {
      if (s & (1u << i)) continue;
      const std::size_t k = static_cast<std::size_t>(__builtin_popcount(s));
      const double weight = fact[k] * fact[n - k - 1] / fact[n];
      phi[i] += weight * (v(s | (1u << i)) - v(s));
    }
  }
  return phi;
}

std::uint32_t to_mask(const KeepVector& z) {
  std::uint32_t m = 0;
  for (std::size_t s = 0; s < z.size(); ++s) m |= static_cast<std::uint32_t>(z[s] != 0) << s;
  return m;
}

CoalitionBatchValue from_scalar(std::function<double(const KeepVector&)> f) {
  return [f](const std::vector<KeepVector>& zs) {
    std::vector<double> out;
    for (const auto& z : zs) out.push_back(f(z));
    return out;
  };
}

ModelGraph pointwise_model(std::size_t k, std::size_t classes, std::size_t size, std::uint64_t seed) {
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
  return m;
}

ModelGraph tiny_inception(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.input_height = cfg.input_width = 16;
  cfg.channels = {8};
  cfg.num_blocks = 1;
  ModelGraph m = build_mini_inception(cfg);
  init_parameters(m, seed);
  return m;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(GradCam, MatchesPointwiseConvOracle) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const std::size_t k = 4, size = 6;
    ModelGraph m = pointwise_model(k, 3, size, seed);
    Rng rng(seed + 100);
    Tensor img = random_uniform({3, size, size}, 0, 1, rng);
    const std::size_t target = seed % 3;
    Heatmap h = grad_cam(m, img, target);

    auto& conv = dynamic_cast<Conv2d&>(m.features().at(0));
    auto& dense = dynamic_cast<Dense&>(m.head().at(1));
    std::vector<ParamRef> dp;
    dense.collect_params(dp);
    const Tensor& wd = *dp[0].value;  // k x classes
    std::vector<double> cam(size * size, 0.0);
    double peak = 0.0;
    for (std::size_t i = 0; i < size * size; ++i) {
      double acc = 0.0;
      for (std::size_t ch = 0; ch < k; ++ch) {
        double a = conv.bias()[ch];
        for (std::size_t c = 0; c < 3; ++c) a += conv.weights()[ch * 3 + c] * img[c * size * size + i];
        acc += wd[ch * 3 + target] * a;
      }
      cam[i] = std::max(0.0, acc);
      peak = std::max(peak, cam[i]);
    }
    ASSERT_EQ(h.values.size(), cam.size());
    for (std::size_t i = 0; i < cam.size(); ++i) {
      const double expected = peak > 0 ? cam[i] / peak : 0.0;
      EXPECT_NEAR(h.values[i], expected, 1e-5) << "seed " << seed << " pixel " << i;
    }
  }
}

TEST(GradCam, ConstantLogitGivesZeroMap) {
  ModelGraph m = pointwise_model(4, 2, 6, 3);
  for (auto& p : m.params())
    if (p.name == "head.dense.weight") p.value->fill(0.0f);
  Rng rng(1);
  Heatmap h = grad_cam(m, random_uniform({3, 6, 6}, 0, 1, rng), 1);
  for (float v : h.values) EXPECT_EQ(v, 0.0f);
}

TEST(GradCam, UpsampledToInputAndInRange) {
  ModelGraph m = tiny_inception(4);
  Rng rng(2);
  Tensor img = random_uniform({1, 3, 16, 16}, 0, 1, rng);
  Heatmap h = grad_cam(m, img, 2);
  EXPECT_EQ(h.height, 16u);
  EXPECT_EQ(h.width, 16u);
  EXPECT_EQ(h.values.size(), 256u);
  for (float v : h.values) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_THROW(grad_cam(m, img, 3), ConfigError);
  EXPECT_THROW(grad_cam(m, Tensor({3, 8, 8}), 0), ShapeError);
}

TEST(GridSegments, TileArithmetic) {
  Segmentation one = grid_segments(7, 5, 1);
  EXPECT_EQ(one.count, 1u);
  for (auto l : one.labels) EXPECT_EQ(l, 0u);

  Segmentation g4 = grid_segments(256, 256, 4);
  EXPECT_EQ(g4.count, 16u);
  std::vector<std::size_t> area(16, 0);
  for (auto l : g4.labels) ++area[l];
  for (auto a : area) EXPECT_EQ(a, 64u * 64u);

  Segmentation g3 = grid_segments(10, 10, 3);
  std::vector<std::size_t> widths(3, 0);
  for (std::size_t x = 0; x < 10; ++x) ++widths[g3.labels[x]];
  EXPECT_EQ(widths, (std::vector<std::size_t>{3, 3, 4}));
  EXPECT_EQ(g3.labels[99], 8u);

  EXPECT_THROW(grid_segments(5, 9, 6), ConfigError);
  EXPECT_THROW(grid_segments(5, 9, 0), ConfigError);
}

TEST(MaskSegments, KeepDropAndLocality) {
  Rng rng(3);
  Tensor img = random_uniform({3, 8, 8}, 0, 1, rng);
  Segmentation seg = grid_segments(8, 8, 2);
  EXPECT_EQ(mask_segments(img, seg, KeepVector(4, 1)), img);
  Tensor gray = mask_segments(img, seg, KeepVector(4, 0), MaskFill::gray);
  for (float v : gray.data()) EXPECT_EQ(v, 0.5f);

  KeepVector one_drop{1, 0, 1, 1};
  Tensor masked = mask_segments(img, seg, one_drop);
  double mean0 = 0.0;
  for (std::size_t i = 0; i < 64; ++i) mean0 += img[i];
  mean0 /= 64.0;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 64; ++i) {
      if (seg.labels[i] == 1) {
        if (c == 0) EXPECT_NEAR(masked[i], mean0, 1e-6);
      } else {
        EXPECT_EQ(masked[c * 64 + i], img[c * 64 + i]);
      }
    }
  EXPECT_THROW(mask_segments(img, seg, KeepVector(3, 1)), ShapeError);
}

TEST(Lime, ConstantTargetGivesZeroWeights) {
  Rng rng(4);
  Attribution a = lime_fit(9, from_scalar([](const KeepVector&) { return 0.42; }), 200, rng);
  for (double w : a.weights) EXPECT_LE(std::abs(w), 1e-6);
  EXPECT_NEAR(a.intercept, 0.42, 1e-6);
  EXPECT_EQ(a.r2, 0.0);
}

TEST(Lime, RecoversLinearModel) {
  const std::size_t s = 16;
  Rng rng(5);
  auto mean_bits = [s](const KeepVector& z) {
    return static_cast<double>(std::count(z.begin(), z.end(), 1)) / static_cast<double>(s);
  };
  Attribution a = lime_fit(s, from_scalar(mean_bits), 1000, rng);
  EXPECT_GE(a.r2, 0.99);
  for (double w : a.weights) EXPECT_NEAR(w, 1.0 / s, 2e-3);
}

TEST(Lime, DeterministicAndValidated) {
  auto f = from_scalar([](const KeepVector& z) { return 0.1 * z[0] + 0.7 * z[2] - 0.2 * z[3]; });
  Rng r1(6), r2(6);
  Attribution a = lime_fit(4, f, 50, r1), b = lime_fit(4, f, 50, r2);
  EXPECT_EQ(a.weights, b.weights);
  Rng r3(7);
  EXPECT_THROW(lime_fit(4, f, 4, r3), ConfigError);
}

TEST(KernelShap, TwoPlayerHandExample) {
  const double v[4] = {0.1, 0.5, 0.3, 0.9};  // indexed by keep mask
  Rng rng(8);
  Attribution a = kernel_shap_fit(2, from_scalar([&](const KeepVector& z) { return v[to_mask(z)]; }), 0, rng);
  ASSERT_TRUE(a.exact);
  EXPECT_NEAR(a.weights[0], 0.5, 1e-12);
  EXPECT_NEAR(a.weights[1], 0.3, 1e-12);
}

TEST(KernelShap, ExactModeMatchesBruteForceShapley) {
  Rng gen(9);
  std::uniform_int_distribution<std::size_t> players(1, 8);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = players(gen);
    std::vector<double> table(1u << n);
    for (auto& t : table) t = val(gen);
    Rng rng(trial);
    Attribution a = kernel_shap_fit(n, from_scalar([&](const KeepVector& z) { return table[to_mask(z)]; }), 0, rng);
    const auto phi = shapley_oracle(n, [&](std::uint32_t m) { return table[m]; });
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(a.weights[i], phi[i], 1e-4) << "trial " << trial;
    EXPECT_LE(std::abs(a.efficiency_residual), 1e-6);
    double sum = 0.0;
    for (double w : a.weights) sum += w;
    EXPECT_NEAR(sum, table.back() - table.front(), 1e-6);
  }
}

TEST(KernelShap, ConstantModelGivesZero) {
  Rng rng(10);
  Attribution a = kernel_shap_fit(5, from_scalar([](const KeepVector&) { return 0.3; }), 0, rng);
  for (double w : a.weights) EXPECT_NEAR(w, 0.0, 1e-12);
}

TEST(KernelShap, SampledModeOnAdditiveGame) {
  const std::size_t n = 16;
  std::vector<double> coef(n);
  for (std::size_t i = 0; i < n; ++i) coef[i] = std::sin(static_cast<double>(i)) * 0.1;
  auto additive = [&](const KeepVector& z) {
    double s = 0.05;
    for (std::size_t i = 0; i < n; ++i) s += coef[i] * z[i];
    return s;
  };
  Rng rng(11);
  Attribution a = kernel_shap_fit(n, from_scalar(additive), 400, rng);
  EXPECT_FALSE(a.exact);
  EXPECT_EQ(a.evaluations, 402u);
  EXPECT_LE(std::abs(a.efficiency_residual), 1e-9);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(a.weights[i], coef[i], 1e-9);
}

TEST(ModelExplain, DeterministicAndEfficient) {
  ModelGraph m = tiny_inception(12);
  Rng img_rng(13);
  Tensor img = random_uniform({3, 16, 16}, 0, 1, img_rng);
  Segmentation seg = grid_segments(img, 3);
  Rng r1(14), r2(14);
  Attribution s1 = kernel_shap(m, img, seg, 0, 1, r1), s2 = kernel_shap(m, img, seg, 0, 1, r2);
  EXPECT_EQ(s1.weights, s2.weights);
  EXPECT_LE(std::abs(s1.efficiency_residual), 1e-6);
  const Tensor full = m.forward(img.reshaped({1, 3, 16, 16}));
  EXPECT_NEAR(s1.full_value, full[1], 1e-7);
  Rng r3(15), r4(15);
  Attribution l1 = lime_explain(m, img, seg, 64, 1, r3), l2 = lime_explain(m, img, seg, 64, 1, r4);
  EXPECT_EQ(l1.weights, l2.weights);
  EXPECT_EQ(l1.weights.size(), 9u);
}

TEST(Render, ZeroHeatmapIsBlueBlend) {
  Rng rng(16);
  Tensor img = random_uniform({3, 5, 7}, 0, 1, rng);
  Heatmap h{5, 7, std::vector<float>(35, 0.0f), 0};
  RgbImage out = render_heatmap_overlay(img, h);
  EXPECT_EQ(out.width, 7u);
  EXPECT_EQ(out.height, 5u);
  const float blue_end[3] = {0.0f, 0.0f, 0.5f};
  for (std::size_t i = 0; i < 35; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const float expected = 0.55f * img[c * 35 + i] + 0.45f * blue_end[c];
      EXPECT_EQ(out.pixels[i * 3 + c], static_cast<std::uint8_t>(std::lround(expected * 255.0f)));
    }
  auto hot = jet(1.0f);
  EXPECT_EQ(hot[0], 0.5f);
  EXPECT_EQ(hot[2], 0.0f);
}

TEST(Render, PngBytesAreDeterministic) {
  fs::path dir = fs::temp_directory_path() / "orchard_test_explain";
  fs::create_directories(dir);
  ModelGraph m = tiny_inception(17);
  Rng rng(18);
  Tensor img = random_uniform({3, 16, 16}, 0, 1, rng);
  Heatmap h = grad_cam(m, img, 0);
  render_overlay(img, h, dir / "a.png");
  render_overlay(img, h, dir / "b.png");
  EXPECT_EQ(slurp(dir / "a.png"), slurp(dir / "b.png"));
  RgbImage back = decode_image(dir / "a.png");
  EXPECT_EQ(back.width, 16u);
  EXPECT_EQ(back.height, 16u);
}

TEST(Render, PositiveSegmentsOutlinedInYellow) {
  Tensor img({3, 8, 8}, 0.2f);
  Segmentation seg = grid_segments(8, 8, 2);
  Attribution a;
  a.weights = {0.5, -0.5, 0.0, 0.25};
  RgbImage out = render_attribution_overlay(img, seg, a);
  auto px = [&](std::size_t y, std::size_t x, std::size_t c) { return out.pixels[(y * 8 + x) * 3 + c]; };
  EXPECT_EQ(px(0, 0, 0), 255);
  EXPECT_EQ(px(0, 0, 1), 255);
  EXPECT_EQ(px(0, 0, 2), 0);
  EXPECT_NE(px(1, 1, 0), 255);              // interior of the positive tile is tinted, not outlined
  EXPECT_GT(px(1, 5, 2), px(1, 5, 1));      // negative tile leans blue
  EXPECT_EQ(px(5, 1, 0), std::lround(0.2f * 255.0f));  // zero weight leaves the image alone
}
