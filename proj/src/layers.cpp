#include "orchard/layers.hpp"

#include "orchard/errors.hpp"
#include "orchard/ops.hpp"

namespace orchard {

namespace {
void require_cache(const Tensor& cached, std::string_view kind) {
  if (cached.empty()) throw std::logic_error(std::string(kind) + ": backward called before forward");
}
}  // namespace

// ---- Conv2d ----

Conv2d::Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               std::size_t stride, std::size_t padding)
    : name_(std::move(name)),
      stride_(stride),
      padding_(padding),
      weights_({out_channels, in_channels, kernel, kernel}),
      bias_({out_channels}),
      weights_grad_({out_channels, in_channels, kernel, kernel}),
      bias_grad_({out_channels}) {}

Tensor Conv2d::forward(const Tensor& input) {
  cached_input_ = input;
  return infer(input);
}

Tensor Conv2d::infer(const Tensor& input) const {
  return conv2d_forward(input, weights_, bias_, stride_, padding_);
}

Tensor Conv2d::backward(const Tensor& upstream) {
  require_cache(cached_input_, kind());
  Conv2dGrads g = conv2d_backward(upstream, cached_input_, weights_, stride_, padding_);
  for (std::size_t i = 0; i < weights_grad_.size(); ++i) weights_grad_[i] += g.weights[i];
  for (std::size_t i = 0; i < bias_grad_.size(); ++i) bias_grad_[i] += g.bias[i];
  return std::move(g.input);
}

Shape Conv2d::output_shape(const Shape& input) const {
  if (input.size() != 4 || input[1] != weights_.dim(1)) {
    throw ShapeError(name_ + ": expected N x " + std::to_string(weights_.dim(1)) + " x H x W input, got " +
                     shape_str(input));
  }
  const std::size_t k = weights_.dim(2);
  if (k > input[2] + 2 * padding_ || k > input[3] + 2 * padding_) {
    throw ShapeError(name_ + ": spatial size " + shape_str(input) + " too small for kernel " + std::to_string(k));
  }
  return {input[0], weights_.dim(0), conv_output_size(input[2], k, stride_, padding_),
          conv_output_size(input[3], k, stride_, padding_)};
}

void Conv2d::collect_params(std::vector<ParamRef>& out) {
  const std::size_t fan_in = weights_.dim(1) * weights_.dim(2) * weights_.dim(3);
  out.push_back({name_ + ".weight", &weights_, &weights_grad_, fan_in, false});
  out.push_back({name_ + ".bias", &bias_, &bias_grad_, fan_in, true});
}

// ---- Relu ----

Tensor Relu::forward(const Tensor& input) {
  cached_input_ = input;
  return relu_forward(input);
}

Tensor Relu::infer(const Tensor& input) const { return relu_forward(input); }

Tensor Relu::backward(const Tensor& upstream) {
  require_cache(cached_input_, kind());
  return relu_backward(upstream, cached_input_);
}

void Relu::append_pattern(std::vector<std::uint32_t>& out) const {
  std::uint32_t word = 0;
  std::size_t bit = 0;
  for (float v : cached_input_.data()) {
    if (v > 0.0f) word |= (1u << bit);
    if (++bit == 32) {
      out.push_back(word);
      word = 0;
      bit = 0;
    }
  }
  if (bit) out.push_back(word);
}

// ---- MaxPool2d ----

MaxPool2d::MaxPool2d(std::size_t kernel, std::size_t stride, std::size_t padding)
    : kernel_(kernel), stride_(stride), padding_(padding) {}

Tensor MaxPool2d::forward(const Tensor& input) {
  MaxPoolResult r = maxpool2d_forward(input, kernel_, stride_, padding_);
  cached_shape_ = input.shape();
  argmax_ = std::move(r.argmax);
  return std::move(r.output);
}

Tensor MaxPool2d::infer(const Tensor& input) const {
  return maxpool2d_forward(input, kernel_, stride_, padding_).output;
}

Tensor MaxPool2d::backward(const Tensor& upstream) {
  if (cached_shape_.empty()) throw std::logic_error("maxpool2d: backward called before forward");
  return maxpool2d_backward(upstream, argmax_, cached_shape_);
}

Shape MaxPool2d::output_shape(const Shape& input) const {
  if (input.size() != 4 || kernel_ > input[2] + 2 * padding_ || kernel_ > input[3] + 2 * padding_) {
    throw ShapeError("maxpool2d: window " + std::to_string(kernel_) + " larger than input " + shape_str(input));
  }
  return {input[0], input[1], conv_output_size(input[2], kernel_, stride_, padding_),
          conv_output_size(input[3], kernel_, stride_, padding_)};
}

void MaxPool2d::append_pattern(std::vector<std::uint32_t>& out) const {
  out.insert(out.end(), argmax_.begin(), argmax_.end());
}

// ---- GlobalAvgPool ----

Tensor GlobalAvgPool::forward(const Tensor& input) {
  cached_shape_ = input.shape();
  return global_avg_pool_forward(input);
}

Tensor GlobalAvgPool::infer(const Tensor& input) const { return global_avg_pool_forward(input); }

Tensor GlobalAvgPool::backward(const Tensor& upstream) {
  if (cached_shape_.empty()) throw std::logic_error("global_avg_pool: backward called before forward");
  return global_avg_pool_backward(upstream, cached_shape_);
}

Shape GlobalAvgPool::output_shape(const Shape& input) const {
  if (input.size() != 4) throw ShapeError("global_avg_pool: expected NCHW input, got " + shape_str(input));
  return {input[0], input[1]};
}

// ---- Dense ----

Dense::Dense(std::string name, std::size_t in_features, std::size_t out_features)
    : name_(std::move(name)),
      weights_({in_features, out_features}),
      bias_({out_features}),
      weights_grad_({in_features, out_features}),
      bias_grad_({out_features}) {}

Tensor Dense::forward(const Tensor& input) {
  cached_input_ = input;
  return infer(input);
}

Tensor Dense::infer(const Tensor& input) const { return dense_forward(input, weights_, bias_); }

Tensor Dense::backward(const Tensor& upstream) {
  require_cache(cached_input_, kind());
  DenseGrads g = dense_backward(upstream, cached_input_, weights_);
  for (std::size_t i = 0; i < weights_grad_.size(); ++i) weights_grad_[i] += g.weights[i];
  for (std::size_t i = 0; i < bias_grad_.size(); ++i) bias_grad_[i] += g.bias[i];
  return std::move(g.input);
}

Shape Dense::output_shape(const Shape& input) const {
  if (input.size() != 2 || input[1] != weights_.dim(0)) {
    throw ShapeError(name_ + ": expected N x " + std::to_string(weights_.dim(0)) + " input, got " +
                     shape_str(input));
  }
  return {input[0], weights_.dim(1)};
}

void Dense::collect_params(std::vector<ParamRef>& out) {
  const std::size_t fan_in = weights_.dim(0);
  out.push_back({name_ + ".weight", &weights_, &weights_grad_, fan_in, false});
  out.push_back({name_ + ".bias", &bias_, &bias_grad_, fan_in, true});
}

// ---- Sequential ----

Sequential::Sequential(const Sequential& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential copy(other);
    layers_ = std::move(copy.layers_);
  }
  return *this;
}

Sequential& Sequential::add(std::unique_ptr<Layer> layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

Tensor Sequential::forward(const Tensor& input) {
  Tensor x = input;
  for (auto& l : layers_) x = l->forward(x);
  return x;
}

Tensor Sequential::infer(const Tensor& input) const {
  Tensor x = input;
  for (const auto& l : layers_) x = l->infer(x);
  return x;
}

Tensor Sequential::backward(const Tensor& upstream) {
  Tensor g = upstream;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

Shape Sequential::output_shape(const Shape& input) const {
  Shape s = input;
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

void Sequential::collect_params(std::vector<ParamRef>& out) {
  for (auto& l : layers_) l->collect_params(out);
}

void Sequential::append_pattern(std::vector<std::uint32_t>& out) const {
  for (const auto& l : layers_) l->append_pattern(out);
}

// ---- InceptionBlock ----

InceptionBlock::InceptionBlock(std::vector<Sequential> branches) : branches_(std::move(branches)) {
  if (branches_.empty()) throw ShapeError("inception block needs at least one branch");
}

Tensor InceptionBlock::forward(const Tensor& input) {
  std::vector<Tensor> outs;
  outs.reserve(branches_.size());
  cached_channels_.clear();
  for (auto& b : branches_) {
    outs.push_back(b.forward(input));
    cached_channels_.push_back(outs.back().dim(1));
  }
  return channel_concat(outs);
}

Tensor InceptionBlock::infer(const Tensor& input) const {
  std::vector<Tensor> outs;
  outs.reserve(branches_.size());
  for (const auto& b : branches_) outs.push_back(b.infer(input));
  return channel_concat(outs);
}

Tensor InceptionBlock::backward(const Tensor& upstream) {
  if (cached_channels_.empty()) throw std::logic_error("inception: backward called before forward");
  std::vector<Tensor> parts = channel_split(upstream, cached_channels_);
  Tensor grad = branches_[0].backward(parts[0]);
  for (std::size_t i = 1; i < branches_.size(); ++i) {
    Tensor g = branches_[i].backward(parts[i]);
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += g[j];
  }
  return grad;
}

Shape InceptionBlock::output_shape(const Shape& input) const {
  Shape out;
  std::size_t channels = 0;
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    Shape s = branches_[i].output_shape(input);
    if (i == 0) {
      out = s;
    } else if (s[0] != out[0] || s[2] != out[2] || s[3] != out[3]) {
      throw ShapeError("inception: branch " + std::to_string(i) + " output " + shape_str(s) +
                       " does not share N,H,W with " + shape_str(out));
    }
    channels += s[1];
  }
  out[1] = channels;
  return out;
}

void InceptionBlock::collect_params(std::vector<ParamRef>& out) {
  for (auto& b : branches_) b.collect_params(out);
}

void InceptionBlock::append_pattern(std::vector<std::uint32_t>& out) const {
  for (const auto& b : branches_) b.append_pattern(out);
}

// ---- ResidualBlock ----

ResidualBlock::ResidualBlock(Sequential body, std::unique_ptr<Conv2d> projection)
    : body_(std::move(body)), projection_(std::move(projection)) {}

ResidualBlock::ResidualBlock(const ResidualBlock& other)
    : Layer(other),
      body_(other.body_),
      projection_(other.projection_ ? std::make_unique<Conv2d>(*other.projection_) : nullptr),
      cached_sum_(other.cached_sum_) {}

Tensor ResidualBlock::forward(const Tensor& input) {
  Tensor main = body_.forward(input);
  Tensor shortcut = projection_ ? projection_->forward(input) : input;
  cached_sum_ = residual_add(main, shortcut);
  return relu_forward(cached_sum_);
}

Tensor ResidualBlock::infer(const Tensor& input) const {
  Tensor main = body_.infer(input);
  Tensor shortcut = projection_ ? projection_->infer(input) : input;
  return relu_forward(residual_add(main, shortcut));
}

Tensor ResidualBlock::backward(const Tensor& upstream) {
  require_cache(cached_sum_, kind());
  Tensor g = relu_backward(upstream, cached_sum_);
  Tensor grad = body_.backward(g);
  Tensor g_short = projection_ ? projection_->backward(g) : g;
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g_short[i];
  return grad;
}

Shape ResidualBlock::output_shape(const Shape& input) const {
  Shape main = body_.output_shape(input);
  Shape shortcut = projection_ ? projection_->output_shape(input) : input;
  if (main != shortcut) {
    throw ShapeError("residual: body output " + shape_str(main) + " does not match shortcut " +
                     shape_str(shortcut));
  }
  return main;
}

void ResidualBlock::collect_params(std::vector<ParamRef>& out) {
  body_.collect_params(out);
  if (projection_) projection_->collect_params(out);
}

void ResidualBlock::append_pattern(std::vector<std::uint32_t>& out) const {
  body_.append_pattern(out);
  std::uint32_t word = 0;
  std::size_t bit = 0;
  for (float v : cached_sum_.data()) {
    if (v > 0.0f) word |= (1u << bit);
    if (++bit == 32) {
      out.push_back(word);
      word = 0;
      bit = 0;
    }
  }
  if (bit) out.push_back(word);
}

}  // namespace orchard
