#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "orchard/tensor.hpp"

namespace orchard {

/// A named trainable tensor and its gradient accumulator, owned by a layer.
struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
  std::size_t fan_in = 0;
  bool is_bias = false;
};

/// One node of a model graph.
///
/// forward() caches whatever backward() needs and may be called by a single
/// writer only; infer() is const and safe for concurrent use. backward()
/// accumulates into parameter gradients, so callers zero them between steps.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string_view kind() const = 0;
  virtual Tensor forward(const Tensor& input) = 0;
  virtual Tensor infer(const Tensor& input) const = 0;
  virtual Tensor backward(const Tensor& upstream) = 0;
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;

  virtual void collect_params(std::vector<ParamRef>& /*out*/) {}

  // Discrete state of piecewise-linear layers (relu masks, pool winners) from
  // the last forward(). Finite-difference checks skip coordinates whose
  // perturbation changes it.
  virtual void append_pattern(std::vector<std::uint32_t>& /*out*/) const {}
};

class Conv2d final : public Layer {
 public:
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride = 1, std::size_t padding = 0);

  std::string_view kind() const override { return "conv2d"; }
  Tensor forward(const Tensor& input) override;
  Tensor infer(const Tensor& input) const override;
  Tensor backward(const Tensor& upstream) override;
  Shape output_shape(const Shape& input) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }
  void collect_params(std::vector<ParamRef>& out) override;

  Tensor& weights() { return weights_; }
  Tensor& bias() { return bias_; }
  const Tensor& weights() const { return weights_; }
  const Tensor& bias() const { return bias_; }
  std::size_t stride() const { return stride_; }
  std::size_t padding() const { return padding_; }

 private:
  std::string name_;
  std::size_t stride_;
  std::size_t padding_;
  Tensor weights_, bias_;
  Tensor weights_grad_, bias_grad_;
  Tensor cached_input_;
};

class Relu final : public Layer {
 public:
  std::string_view kind() const override { return "relu"; }
  Tensor forward(const Tensor& input) override;
  Tensor infer(const Tensor& input) const override;
  Tensor backward(const Tensor& upstream) override;
  Shape output_shape(const Shape& input) const override { return input; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }
  void append_pattern(std::vector<std::uint32_t>& out) const override;

 private:
  Tensor cached_input_;
};

class MaxPool2d final : public Layer {
 public:
  MaxPool2d(std::size_t kernel, std::size_t stride, std::size_t padding = 0);

  std::string_view kind() const override { return "maxpool2d"; }
  Tensor forward(const Tensor& input) override;
  Tensor infer(const Tensor& input) const override;
  Tensor backward(const Tensor& upstream) override;
  Shape output_shape(const Shape& input) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool2d>(*this); }
  void append_pattern(std::vector<std::uint32_t>& out) const override;

 private:
  std::size_t kernel_, stride_, padding_;
  Shape cached_shape_;
  std::vector<std::uint32_t> argmax_;
};

class GlobalAvgPool final : public Layer {
 public:
  std::string_view kind() const override { return "global_avg_pool"; }
  Tensor forward(const Tensor& input) override;
  Tensor infer(const Tensor& input) const override;
  Tensor backward(const Tensor& upstream) override;
  Shape output_shape(const Shape& input) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }

 private:
  Shape cached_shape_;
};

class Dense final : public Layer {
 public:
  Dense(std::string name, std::size_t in_features, std::size_t out_features);

  std::string_view kind() const override { return "dense"; }
  Tensor forward(const Tensor& input) override;
  Tensor infer(const Tensor& input) const override;
  Tensor backward(const Tensor& upstream) override;
  Shape output_shape(const Shape& input) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }
  void collect_params(std::vector<ParamRef>& out) override;

  Tensor& weights() { return weights_; }
  Tensor& bias() { return bias_; }
  const Tensor& weights() const { return weights_; }

 private:
  std::string name_;
  Tensor weights_, bias_;
  Tensor weights_grad_, bias_grad_;
  Tensor cached_input_;
};

class Sequential final : public Layer {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  Sequential& add(std::unique_ptr<Layer> layer);
  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  std::size_t size() const { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_.at(i); }
  const Layer& at(std::size_t i) const { return *layers_.at(i); }

  std::string_view kind() const override { return "sequential"; }
  Tensor forward(const Tensor& input) override;
  Tensor infer(const Tensor& input) const override;
  Tensor backward(const Tensor& upstream) override;
  Shape output_shape(const Shape& input) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Sequential>(*this); }
  void collect_params(std::vector<ParamRef>& out) override;
  void append_pattern(std::vector<std::uint32_t>& out) const override;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Parallel branches over one input, outputs joined along the channel axis.
class InceptionBlock final : public Layer {
 public:
  explicit InceptionBlock(std::vector<Sequential> branches);

  std::string_view kind() const override { return "inception"; }
  Tensor forward(const Tensor& input) override;
  Tensor infer(const Tensor& input) const override;
  Tensor backward(const Tensor& upstream) override;
  Shape output_shape(const Shape& input) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<InceptionBlock>(*this); }
  void collect_params(std::vector<ParamRef>& out) override;
  void append_pattern(std::vector<std::uint32_t>& out) const override;

  const std::vector<Sequential>& branches() const { return branches_; }

 private:
  std::vector<Sequential> branches_;
  std::vector<std::size_t> cached_channels_;
};

/// relu(body(x) + shortcut(x)); the shortcut is identity unless a projection is given.
class ResidualBlock final : public Layer {
 public:
  ResidualBlock(Sequential body, std::unique_ptr<Conv2d> projection);
  ResidualBlock(const ResidualBlock& other);

  std::string_view kind() const override { return "residual"; }
  Tensor forward(const Tensor& input) override;
  Tensor infer(const Tensor& input) const override;
  Tensor backward(const Tensor& upstream) override;
  Shape output_shape(const Shape& input) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ResidualBlock>(*this); }
  void collect_params(std::vector<ParamRef>& out) override;
  void append_pattern(std::vector<std::uint32_t>& out) const override;

  Sequential& body() { return body_; }
  bool has_projection() const { return projection_ != nullptr; }

 private:
  Sequential body_;
  std::unique_ptr<Conv2d> projection_;
  Tensor cached_sum_;
};

}  // namespace orchard
