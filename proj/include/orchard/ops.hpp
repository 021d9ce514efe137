#pragma once

// Forward/backward kernels for the fixed layer set. Spatial tensors are NCHW,
// dense tensors are N x F. Every backward takes an upstream gradient shaped
// like the forward output and returns gradients shaped like the forward
// inputs/parameters.

#include <cstdint>
#include <span>
#include <vector>

#include "orchard/tensor.hpp"

namespace orchard {

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

/// Cross-correlation (no kernel flip). weights: Cout x Cin x kh x kw, bias: Cout.
Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t stride,
                      std::size_t padding);

struct Conv2dGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

Conv2dGrads conv2d_backward(const Tensor& upstream, const Tensor& input, const Tensor& weights,
                            std::size_t stride, std::size_t padding);

struct MaxPoolResult {
  Tensor output;
  // Flat input index of the winning element for every output cell.
  std::vector<std::uint32_t> argmax;
};

/// Padded cells never win. Ties go to the first row-major position in the window.
MaxPoolResult maxpool2d_forward(const Tensor& input, std::size_t kernel, std::size_t stride,
                                std::size_t padding = 0);
Tensor maxpool2d_backward(const Tensor& upstream, std::span<const std::uint32_t> argmax,
                          const Shape& input_shape);

Tensor global_avg_pool_forward(const Tensor& input);
Tensor global_avg_pool_backward(const Tensor& upstream, const Shape& input_shape);

/// input N x F, weights F x K, bias K.
Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

DenseGrads dense_backward(const Tensor& upstream, const Tensor& input, const Tensor& weights);

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& upstream, const Tensor& input);

Tensor channel_concat(std::span<const Tensor> parts);
std::vector<Tensor> channel_split(const Tensor& upstream, std::span<const std::size_t> channels);

Tensor residual_add(const Tensor& a, const Tensor& b);

/// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& logits);

inline constexpr double kLogClamp = 1e-7;

/// Mean over rows of -sum_k b[n,k] * log(max(p[n,k], 1e-7)). Label rows must sum to 1 within 1e-5.
double cross_entropy(const Tensor& probs, const Tensor& soft_labels);

/// Gradient of cross_entropy(softmax(logits)) w.r.t. the logits: (p - b) / N.
Tensor softmax_cross_entropy_backward(const Tensor& probs, const Tensor& soft_labels);

void check_soft_labels(const Tensor& soft_labels, double tolerance = 1e-5);

}  // namespace orchard
