#include <gtest/gtest.h>

#include "orchard/errors.hpp"
#include "orchard/gradcheck.hpp"
#include "orchard/ops.hpp"

using namespace orchard;

namespace {
constexpr double kLayerTol = 1e-3;
constexpr double kModelTol = 2e-3;
}  // namespace

TEST(GradCheck, Dense) {
  Dense layer("fc", 6, 4);
  auto r = gradient_check(layer, {3, 6}, 7);
  EXPECT_LE(r.max_relative_error, kLayerTol) << r.worst_tensor;
  EXPECT_EQ(r.skipped, 0u);
}

TEST(GradCheck, Conv2dSpecCase) {
  Conv2d layer("conv", 2, 3, 3);
  auto r = gradient_check(layer, {1, 2, 5, 5}, 1);
  EXPECT_LE(r.max_relative_error, kLayerTol) << r.worst_tensor;
  EXPECT_EQ(r.checked, 50u + 54u + 3u);
}

TEST(GradCheck, Conv2dStridedPadded) {
  Conv2d layer("conv", 3, 4, 3, 2, 1);
  auto r = gradient_check(layer, {2, 3, 6, 6}, 2);
  EXPECT_LE(r.max_relative_error, kLayerTol) << r.worst_tensor;
  Conv2d five("conv5", 2, 2, 5, 1, 2);
  EXPECT_LE(gradient_check(five, {1, 2, 4, 4}, 3).max_relative_error, kLayerTol);
}

TEST(GradCheck, ReluAwayFromKink) {
  Relu layer;
  GradCheckOptions opt;
  opt.min_abs_input = 0.1f;
  auto r = gradient_check(layer, {2, 3, 4, 4}, 4, opt);
  EXPECT_LE(r.max_relative_error, kLayerTol);
  EXPECT_EQ(r.skipped, 0u);
}

TEST(GradCheck, MaxPoolOnUntiedWindows) {
  MaxPool2d layer(2, 2);
  auto r = gradient_check(layer, {1, 2, 6, 6}, 5);
  EXPECT_LE(r.max_relative_error, kLayerTol);
  MaxPool2d padded(3, 1, 1);
  EXPECT_LE(gradient_check(padded, {1, 2, 5, 5}, 6).max_relative_error, kLayerTol);
}

TEST(GradCheck, GlobalAvgPool) {
  GlobalAvgPool layer;
  EXPECT_LE(gradient_check(layer, {2, 3, 4, 5}, 6).max_relative_error, kLayerTol);
}

TEST(GradCheck, InceptionAndResidualBlocks) {
  ModelConfig cfg;
  cfg.input_height = cfg.input_width = 8;
  cfg.channels = {4};
  cfg.num_blocks = 1;
  cfg.num_classes = 2;
  ModelGraph inc = build_mini_inception(cfg);
  Layer& block = inc.features().at(3);
  ASSERT_EQ(block.kind(), "inception");
  EXPECT_LE(gradient_check(block, {1, 4, 4, 4}, 9).max_relative_error, kLayerTol);

  cfg.channels = {4, 6};
  cfg.num_blocks = 2;
  ModelGraph res = build_mini_resnet(cfg);
  Layer& proj_block = res.features().at(4);
  ASSERT_EQ(proj_block.kind(), "residual");
  EXPECT_LE(gradient_check(proj_block, {1, 4, 4, 4}, 10).max_relative_error, kLayerTol);
}

TEST(GradCheck, ConcatAndResidualAddBackwardRules) {
  Rng rng(12);
  Tensor up = random_uniform({1, 5, 2, 2}, -1, 1, rng);
  std::vector<std::size_t> widths{2, 3};
  auto parts = channel_split(up, widths);
  EXPECT_EQ(channel_concat(parts), up);
}

// Randomised shape audit: backward output shapes equal forward input/param shapes.
TEST(GradCheck, RandomisedShapeAudit) {
  Rng rng(21);
  std::uniform_int_distribution<std::size_t> dim(1, 4), sp(3, 7), k(1, 3), s(1, 2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = dim(rng), cin = dim(rng), cout = dim(rng), h = sp(rng), w = sp(rng);
    const std::size_t kernel = 2 * k(rng) - 1, stride = s(rng), pad = kernel / 2;
    Conv2d conv("c", cin, cout, kernel, stride, pad);
    const Shape in{n, cin, h, w};
    const Shape declared = conv.output_shape(in);
    Tensor x = random_uniform(in, -1, 1, rng);
    Tensor y = conv.forward(x);
    ASSERT_EQ(y.shape(), declared);
    Tensor gx = conv.backward(Tensor(declared, 1.0f));
    EXPECT_EQ(gx.shape(), in);
    std::vector<ParamRef> ps;
    conv.collect_params(ps);
    for (auto& p : ps) EXPECT_EQ(p.grad->shape(), p.value->shape());

    MaxPool2d pool(2, 2);
    if (h >= 2 && w >= 2) {
      Tensor py = pool.forward(x);
      EXPECT_EQ(py.shape(), pool.output_shape(in));
      EXPECT_EQ(pool.backward(Tensor(py.shape(), 1.0f)).shape(), in);
    }
  }
}

TEST(GradCheck, EndToEndTinyModelsAcrossSeeds) {
  ModelConfig cfg;
  cfg.input_height = cfg.input_width = 8;
  cfg.channels = {4};
  cfg.num_blocks = 1;
  cfg.num_classes = 2;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ModelGraph inc = build_mini_inception(cfg);
    auto ri = model_gradient_check(inc, 2, seed);
    EXPECT_LE(ri.max_relative_error, kModelTol) << "inception seed " << seed << " " << ri.worst_tensor;
    ModelGraph res = build_mini_resnet(cfg);
    auto rr = model_gradient_check(res, 2, seed);
    EXPECT_LE(rr.max_relative_error, kModelTol) << "resnet seed " << seed << " " << rr.worst_tensor;
    EXPECT_GT(ri.checked, ri.skipped);
    EXPECT_GT(rr.checked, rr.skipped);
  }
}
