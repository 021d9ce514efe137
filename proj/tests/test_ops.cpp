#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "orchard/errors.hpp"
#include "orchard/ops.hpp"

using namespace orchard;

namespace {

Tensor make(Shape shape, std::vector<float> values) { return Tensor(std::move(shape), std::move(values)); }

// Direct nested-loop cross-correlation; independent of the im2col path.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1, wo = (wd + 2 * pad - kw) / stride + 1;
  Tensor out({n, cout, ho, wo});
  for (std::size_t b0 = 0; b0 < n; ++b0)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double s = b[co];
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
                s += static_cast<double>(w.at(co, ci, ky, kx)) * x.at(b0, ci, iy, ix);
              }
          out.at(b0, co, oy, ox) = static_cast<float>(s);
        }
  return out;
}

}  // namespace

TEST(Tensor, RejectsMismatchedDataLength) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<float>(5)), ShapeError);
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  Tensor t({2, 3}, 1.5f);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_THROW(t.reshaped({4}), ShapeError);
}

TEST(Conv2d, PointwiseKernelScalesInput) {
  Tensor x({1, 1, 3, 3}, 1.0f);
  Tensor w({1, 1, 1, 1}, 2.0f);
  Tensor out = conv2d_forward(x, w, Tensor({1}), 1, 0);
  ASSERT_EQ(out.shape(), (Shape{1, 1, 3, 3}));
  for (float v : out.data()) EXPECT_EQ(v, 2.0f);
}

TEST(Conv2d, TwoByTwoSum) {
  Tensor out = conv2d_forward(make({1, 1, 2, 2}, {1, 2, 3, 4}), Tensor({1, 1, 2, 2}, 1.0f), Tensor({1}), 1, 0);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], 10.0f);
}

TEST(Conv2d, OutputSizeFormula) {
  Rng rng(1);
  Tensor out = conv2d_forward(random_uniform({1, 2, 5, 5}, -1, 1, rng), Tensor({4, 2, 3, 3}), Tensor({4}), 2, 0);
  EXPECT_EQ(out.shape(), (Shape{1, 4, 2, 2}));
  EXPECT_EQ(conv_output_size(64, 3, 2, 1), 32u);
}

TEST(Conv2d, MatchesNaiveLoopsWithStrideAndPadding) {
  Rng rng(3);
  for (auto [stride, pad, k] : {std::tuple{1u, 1u, 3u}, {2u, 1u, 3u}, {1u, 2u, 5u}, {2u, 0u, 1u}, {1u, 0u, 1u}}) {
    Tensor x = random_uniform({2, 3, 7, 6}, -1, 1, rng);
    Tensor w = random_uniform({4, 3, k, k}, -1, 1, rng);
    Tensor b = random_uniform({4}, -1, 1, rng);
    Tensor got = conv2d_forward(x, w, b, stride, pad);
    Tensor want = naive_conv(x, w, b, stride, pad);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-5);
  }
}

TEST(Conv2d, ShapeErrorsNameTheDimension) {
  try {
    conv2d_forward(Tensor({1, 3, 4, 4}), Tensor({2, 2, 3, 3}), Tensor({2}), 1, 0);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("channels"), std::string::npos);
  }
  EXPECT_THROW(conv2d_forward(Tensor({1, 1, 2, 2}), Tensor({1, 1, 3, 3}), Tensor({1}), 1, 0), ShapeError);
  EXPECT_THROW(conv2d_forward(Tensor({1, 1, 4, 4}), Tensor({2, 1, 3, 3}), Tensor({3}), 1, 0), ShapeError);
}

TEST(Conv2d, ZeroUpstreamGivesZeroGradients) {
  Rng rng(4);
  Tensor x = random_uniform({1, 2, 5, 5}, -1, 1, rng);
  Tensor w = random_uniform({3, 2, 3, 3}, -1, 1, rng);
  Conv2dGrads g = conv2d_backward(Tensor({1, 3, 3, 3}), x, w, 1, 0);
  for (const Tensor* t : {&g.input, &g.weights, &g.bias})
    for (float v : t->data()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(conv2d_backward(Tensor({1, 3, 2, 2}), x, w, 1, 0), ShapeError);
}

TEST(Conv2d, BiasGradientSumsUpstream) {
  Rng rng(5);
  Tensor x = random_uniform({2, 2, 5, 5}, -1, 1, rng);
  Tensor w = random_uniform({3, 2, 3, 3}, -1, 1, rng);
  Tensor up = random_uniform({2, 3, 3, 3}, -1, 1, rng);
  Conv2dGrads g = conv2d_backward(up, x, w, 1, 0);
  for (std::size_t co = 0; co < 3; ++co) {
    double s = 0;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < 9; ++i) s += up[(n * 3 + co) * 9 + i];
    EXPECT_NEAR(g.bias[co], s, 1e-5);
  }
}

TEST(MaxPool, MaxOfFour) {
  MaxPoolResult r = maxpool2d_forward(make({1, 1, 2, 2}, {1, 2, 3, 4}), 2, 2);
  ASSERT_EQ(r.output.size(), 1u);
  EXPECT_EQ(r.output[0], 4.0f);
  EXPECT_EQ(r.argmax[0], 3u);
}

TEST(MaxPool, TiesRouteToFirstRowMajorElement) {
  Tensor x({1, 1, 4, 4}, 0.5f);
  MaxPoolResult r = maxpool2d_forward(x, 2, 2);
  Tensor g = maxpool2d_backward(Tensor({1, 1, 2, 2}, 1.0f), r.argmax, x.shape());
  // top-left of each 2x2 window: (0,0) (0,2) (2,0) (2,2)
  for (std::size_t i = 0; i < 16; ++i) {
    const std::size_t y = i / 4, xx = i % 4;
    EXPECT_EQ(g[i], (y % 2 == 0 && xx % 2 == 0) ? 1.0f : 0.0f) << i;
  }
}

TEST(MaxPool, PaddedWindowNeverPicksPadding) {
  Tensor x({1, 1, 2, 2}, -3.0f);
  MaxPoolResult r = maxpool2d_forward(x, 3, 1, 1);
  EXPECT_EQ(r.output.shape(), (Shape{1, 1, 2, 2}));
  for (float v : r.output.data()) EXPECT_EQ(v, -3.0f);
  EXPECT_THROW(maxpool2d_forward(Tensor({1, 1, 2, 2}), 3, 1), ShapeError);
}

TEST(GlobalAvgPool, MeansAndUniformBackward) {
  Tensor ones({1, 3, 4, 4}, 1.0f);
  Tensor m = global_avg_pool_forward(ones);
  EXPECT_EQ(m.shape(), (Shape{1, 3}));
  for (float v : m.data()) EXPECT_EQ(v, 1.0f);
  EXPECT_EQ(global_avg_pool_forward(make({1, 1, 2, 2}, {1, 2, 3, 4}))[0], 2.5f);
  Tensor g = global_avg_pool_backward(make({1, 1}, {2.0f}), {1, 1, 2, 2});
  for (float v : g.data()) EXPECT_EQ(v, 0.5f);
}

TEST(Dense, AffineMap) {
  Tensor x = make({1, 2}, {1, 2});
  Tensor eye = make({2, 2}, {1, 0, 0, 1});
  Tensor same = dense_forward(x, eye, Tensor({2}));
  EXPECT_EQ(same, x);
  Tensor out = dense_forward(x, eye, make({2}, {1, 1}));
  EXPECT_EQ(out[0], 2.0f);
  EXPECT_EQ(out[1], 3.0f);
  EXPECT_THROW(dense_forward(x, Tensor({3, 2}), Tensor({2})), ShapeError);
}

TEST(Relu, ClampsNegatives) {
  Tensor out = relu_forward(make({3}, {-1, 0, 2}));
  EXPECT_EQ(out, make({3}, {0, 0, 2}));
  Tensor g = relu_backward(make({3}, {5, 5, 5}), make({3}, {-1, 0, 2}));
  EXPECT_EQ(g, make({3}, {0, 0, 5}));
}

TEST(ChannelConcat, PreservesPartOrderAndSplitsBack) {
  Rng rng(8);
  Tensor a = random_uniform({2, 2, 3, 3}, -1, 1, rng);
  Tensor b = random_uniform({2, 3, 3, 3}, -1, 1, rng);
  std::vector<Tensor> parts{a, b};
  Tensor c = channel_concat(parts);
  EXPECT_EQ(c.shape(), (Shape{2, 5, 3, 3}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t ch = 0; ch < 5; ++ch)
      for (std::size_t i = 0; i < 9; ++i) {
        const float want = ch < 2 ? a[(n * 2 + ch) * 9 + i] : b[(n * 3 + ch - 2) * 9 + i];
        EXPECT_EQ(c[(n * 5 + ch) * 9 + i], want);
      }
  std::vector<std::size_t> widths{2, 3};
  auto back = channel_split(c, widths);
  EXPECT_EQ(back[0], a);
  EXPECT_EQ(back[1], b);
  std::vector<Tensor> bad{a, Tensor({2, 1, 2, 3})};
  EXPECT_THROW(channel_concat(bad), ShapeError);
}

TEST(ResidualAdd, ExactElementwiseSum) {
  Rng rng(9);
  Tensor a = random_uniform({1, 2, 3, 3}, -1, 1, rng);
  EXPECT_EQ(residual_add(a, Tensor(a.shape())), a);
  Tensor b = random_uniform({1, 2, 3, 3}, -1, 1, rng);
  Tensor s = residual_add(a, b);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s[i], a[i] + b[i]);
  EXPECT_THROW(residual_add(a, Tensor({1, 2, 3, 2})), ShapeError);
}

TEST(Softmax, UniformForEqualLogits) {
  Tensor p = softmax(Tensor({1, 3}));
  for (float v : p.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-7);
}

TEST(CrossEntropy, HandValues) {
  // -log(e^3 / (e^1 + e^2 + e^3))
  const double want = -std::log(std::exp(3.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
  EXPECT_NEAR(want, 0.4076, 1e-4);
  Tensor p = softmax(make({1, 3}, {1, 2, 3}));
  EXPECT_NEAR(cross_entropy(p, make({1, 3}, {0, 0, 1})), want, 1e-6);
  EXPECT_NEAR(cross_entropy(make({1, 3}, {1, 0, 0}), make({1, 3}, {1, 0, 0})), 0.0, 1e-12);
}

TEST(CrossEntropy, ValidatesLabels) {
  EXPECT_THROW(cross_entropy(Tensor({1, 3}, 1.0f / 3), make({1, 3}, {0.5f, 0.1f, 0.1f})), ShapeError);
  EXPECT_THROW(cross_entropy(Tensor({1, 3}, 1.0f / 3), make({1, 2}, {0.5f, 0.5f})), ShapeError);
}

TEST(CrossEntropy, FusedGradientIsProbsMinusLabelsOverN) {
  Tensor p = make({2, 2}, {0.25f, 0.75f, 0.5f, 0.5f});
  Tensor b = make({2, 2}, {1, 0, 0.3f, 0.7f});
  Tensor g = softmax_cross_entropy_backward(p, b);
  EXPECT_FLOAT_EQ(g[0], -0.375f);
  EXPECT_FLOAT_EQ(g[1], 0.375f);
  EXPECT_FLOAT_EQ(g[2], 0.1f);
  EXPECT_FLOAT_EQ(g[3], -0.1f);
}

// Property: random logits -> rows sum to 1, shift invariance, CE >= 0.
TEST(SoftmaxProperty, RowsNormalisedShiftInvariantAndLossNonNegative) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + trial % 7;
    Tensor logits = random_uniform({4, k}, -20, 20, rng);
    Tensor p = softmax(logits);
    Tensor shifted = logits;
    const float c = std::uniform_real_distribution<float>(-5, 5)(rng);
    for (float& v : shifted.data()) v += c;
    Tensor q = softmax(shifted);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < k; ++j) s += p[r * k + j];
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-6);
    Tensor labels = random_uniform({4, k}, 0, 1, rng);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < k; ++j) s += labels[r * k + j];
      for (std::size_t j = 0; j < k; ++j) labels[r * k + j] = static_cast<float>(labels[r * k + j] / s);
    }
    EXPECT_GE(cross_entropy(p, labels), 0.0);
  }
}
