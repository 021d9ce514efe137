#include "orchard/model.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "orchard/errors.hpp"
#include "orchard/ops.hpp"

namespace orchard {

std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::mini_inception: return "mini_inception";
    case ModelVariant::mini_resnet: return "mini_resnet";
    case ModelVariant::custom: return "custom";
  }
  return "custom";
}

ModelVariant parse_model_variant(const std::string& name) {
  if (name == "mini_inception") return ModelVariant::mini_inception;
  if (name == "mini_resnet") return ModelVariant::mini_resnet;
  if (name == "custom") return ModelVariant::custom;
  throw ConfigError("unknown model variant '" + name + "' (expected mini_inception or mini_resnet)");
}

// ---- ModelConfig ----

std::size_t ModelConfig::stage_of_block(std::size_t block) const {
  if (num_blocks == 0 || channels.empty()) return 0;
  return std::min(channels.size() - 1, block * channels.size() / num_blocks);
}

std::size_t ModelConfig::downsampling_factor() const {
  switch (variant) {
    case ModelVariant::mini_inception: {
      // stride-2 stem conv, maxpool, then one maxpool between consecutive blocks
      std::size_t f = 4;
      for (std::size_t b = 1; b < num_blocks; ++b) f *= 2;
      return f;
    }
    case ModelVariant::mini_resnet: {
      std::size_t f = 2;
      for (std::size_t b = 1; b < num_blocks; ++b) {
        if (channels[stage_of_block(b)] != channels[stage_of_block(b - 1)]) f *= 2;
      }
      return f;
    }
    case ModelVariant::custom: return 1;
  }
  return 1;
}

std::vector<std::string> ModelConfig::validation_errors() const {
  std::vector<std::string> errors;
  if (num_classes < 2) errors.push_back("num_classes must be >= 2 (got " + std::to_string(num_classes) + ")");
  if (input_channels == 0) errors.push_back("input_channels must be positive");
  if (input_height == 0 || input_width == 0) errors.push_back("input size must be positive");
  if (channels.empty()) errors.push_back("channels must list at least one stage width");
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i] == 0) errors.push_back("channels[" + std::to_string(i) + "] must be positive");
    if (variant == ModelVariant::mini_inception && channels[i] > 0 && channels[i] < 4) {
      errors.push_back("channels[" + std::to_string(i) + "] must be >= 4 for four inception branches");
    }
  }
  if (variant != ModelVariant::custom && num_blocks == 0) errors.push_back("num_blocks must be >= 1");
  if (errors.empty() && variant != ModelVariant::custom) {
    const std::size_t f = downsampling_factor();
    if (input_height < f || input_width < f || input_height % f != 0 || input_width % f != 0) {
      std::ostringstream os;
      os << "input " << input_height << "x" << input_width << " must be divisible by the total downsampling factor "
         << f << " (spatial size would underflow before the head)";
      errors.push_back(os.str());
    }
  }
  return errors;
}

void ModelConfig::validate() const {
  const auto errors = validation_errors();
  if (errors.empty()) return;
  std::string msg = "invalid model config:";
  for (const auto& e : errors) msg += "\n  - " + e;
  throw ConfigError(msg);
}

// ---- ModelGraph ----

ModelGraph::ModelGraph(ModelConfig config, Sequential features, Sequential head,
                       std::vector<std::string> class_names)
    : config_(std::move(config)), features_(std::move(features)), head_(std::move(head)) {
  set_class_names(std::move(class_names));
  check_unique_names();
}

ModelGraph::ModelGraph(const ModelGraph& other) = default;
ModelGraph& ModelGraph::operator=(const ModelGraph& other) = default;

void ModelGraph::set_class_names(std::vector<std::string> names) {
  if (names.empty()) {
    for (std::size_t i = 0; i < config_.num_classes; ++i) names.push_back("class" + std::to_string(i));
  }
  if (names.size() != config_.num_classes) {
    throw ConfigError("model has " + std::to_string(config_.num_classes) + " classes but " +
                      std::to_string(names.size()) + " class names were given");
  }
  class_names_ = std::move(names);
}

void ModelGraph::check_unique_names() {
  std::set<std::string> seen;
  for (const ParamRef& p : params()) {
    if (!seen.insert(p.name).second) throw ConfigError("duplicate parameter name '" + p.name + "'");
  }
}

void ModelGraph::check_input(const Tensor& batch) const {
  if (batch.rank() != 4 || batch.dim(1) != config_.input_channels || batch.dim(2) != config_.input_height ||
      batch.dim(3) != config_.input_width) {
    std::ostringstream os;
    os << "model expects N x " << config_.input_channels << " x " << config_.input_height << " x "
       << config_.input_width << " input, got " << shape_str(batch.shape());
    throw ShapeError(os.str());
  }
}

Tensor ModelGraph::logits(const Tensor& batch) const {
  check_input(batch);
  return head_.infer(features_.infer(batch));
}

Tensor ModelGraph::forward(const Tensor& batch) const { return softmax(logits(batch)); }

Tensor ModelGraph::train_forward(const Tensor& batch) {
  check_input(batch);
  return head_.forward(features_.forward(batch));
}

Tensor ModelGraph::backward(const Tensor& logits_grad) {
  return features_.backward(head_.backward(logits_grad));
}

std::vector<ParamRef> ModelGraph::params() {
  std::vector<ParamRef> out;
  features_.collect_params(out);
  head_.collect_params(out);
  return out;
}

std::size_t ModelGraph::parameter_count() {
  std::size_t n = 0;
  for (const ParamRef& p : params()) n += p.value->size();
  return n;
}

void ModelGraph::zero_grad() {
  for (ParamRef& p : params()) p.grad->fill(0.0f);
}

void ModelGraph::append_pattern(std::vector<std::uint32_t>& out) const {
  features_.append_pattern(out);
  head_.append_pattern(out);
}

// ---- builders ----

namespace {

Sequential make_head(std::size_t features, std::size_t classes) {
  Sequential head;
  head.emplace<GlobalAvgPool>();
  head.emplace<Dense>("head.dense", features, classes);
  return head;
}

Sequential conv_relu(const std::string& name, std::size_t in, std::size_t out, std::size_t k, std::size_t pad) {
  Sequential s;
  s.emplace<Conv2d>(name, in, out, k, 1, pad);
  s.emplace<Relu>();
  return s;
}

}  // namespace

ModelGraph build_mini_inception(const ModelConfig& config) {
  ModelConfig cfg = config;
  cfg.variant = ModelVariant::mini_inception;
  cfg.validate();

  Sequential features;
  features.emplace<Conv2d>("stem.conv", cfg.input_channels, cfg.channels[0], 3, 2, 1);
  features.emplace<Relu>();
  features.emplace<MaxPool2d>(2, 2);

  std::size_t in = cfg.channels[0];
  for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
    if (b > 0) features.emplace<MaxPool2d>(2, 2);
    const std::string name = "block" + std::to_string(b + 1);
    const std::size_t width = cfg.channels[cfg.stage_of_block(b)];
    const std::size_t quarter = width / 4;
    const std::size_t pointwise = width - 3 * quarter;

    std::vector<Sequential> branches;
    branches.push_back(conv_relu(name + ".branch1x1", in, pointwise, 1, 0));

    Sequential b3 = conv_relu(name + ".branch3x3_reduce", in, quarter, 1, 0);
    b3.emplace<Conv2d>(name + ".branch3x3", quarter, quarter, 3, 1, 1);
    b3.emplace<Relu>();
    branches.push_back(std::move(b3));

    Sequential b5 = conv_relu(name + ".branch5x5_reduce", in, quarter, 1, 0);
    b5.emplace<Conv2d>(name + ".branch5x5", quarter, quarter, 5, 1, 2);
    b5.emplace<Relu>();
    branches.push_back(std::move(b5));

    Sequential bp;
    bp.emplace<MaxPool2d>(3, 1, 1);
    bp.emplace<Conv2d>(name + ".branch_pool", in, quarter, 1, 1, 0);
    bp.emplace<Relu>();
    branches.push_back(std::move(bp));

    features.add(std::make_unique<InceptionBlock>(std::move(branches)));
    in = width;
  }
  return ModelGraph(cfg, std::move(features), make_head(in, cfg.num_classes));
}

ModelGraph build_mini_resnet(const ModelConfig& config) {
  ModelConfig cfg = config;
  cfg.variant = ModelVariant::mini_resnet;
  cfg.validate();

  Sequential features;
  features.emplace<Conv2d>("stem.conv", cfg.input_channels, cfg.channels[0], 3, 1, 1);
  features.emplace<Relu>();
  features.emplace<MaxPool2d>(2, 2);

  std::size_t in = cfg.channels[0];
  for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
    const std::string name = "block" + std::to_string(b + 1);
    const std::size_t width = cfg.channels[cfg.stage_of_block(b)];
    const bool boundary = width != in;
    const std::size_t stride = boundary ? 2 : 1;

    Sequential body;
    body.emplace<Conv2d>(name + ".conv1", in, width, 3, stride, 1);
    body.emplace<Relu>();
    body.emplace<Conv2d>(name + ".conv2", width, width, 3, 1, 1);
    std::unique_ptr<Conv2d> projection;
    if (boundary) projection = std::make_unique<Conv2d>(name + ".shortcut", in, width, 1, stride, 0);
    features.add(std::make_unique<ResidualBlock>(std::move(body), std::move(projection)));
    in = width;
  }
  return ModelGraph(cfg, std::move(features), make_head(in, cfg.num_classes));
}

ModelGraph build_model(const ModelConfig& config) {
  switch (config.variant) {
    case ModelVariant::mini_inception: return build_mini_inception(config);
    case ModelVariant::mini_resnet: return build_mini_resnet(config);
    case ModelVariant::custom: break;
  }
  throw ConfigError("custom models cannot be built from a config");
}

void init_parameters(ModelGraph& model, std::uint64_t seed) {
  Rng rng(seed);
  for (ParamRef& p : model.params()) {
    if (p.is_bias) {
      p.value->fill(0.0f);
      continue;
    }
    const float bound = static_cast<float>(std::sqrt(6.0 / static_cast<double>(p.fan_in)));
    std::uniform_real_distribution<float> dist(-bound, bound);
    for (float& v : p.value->data()) v = dist(rng);
  }
}

std::size_t argmax(std::span<const float> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

Prediction predict_class(const ModelGraph& model, const Tensor& image) {
  Tensor batch = image.rank() == 3 ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}) : image;
  if (batch.rank() != 4 || batch.dim(0) != 1) {
    throw ShapeError("predict_class expects a single image, got " + shape_str(image.shape()));
  }
  Tensor probs = model.forward(batch);
  Prediction p;
  p.probs.assign(probs.data().begin(), probs.data().end());
  p.class_index = argmax(p.probs);
  return p;
}

}  // namespace orchard
