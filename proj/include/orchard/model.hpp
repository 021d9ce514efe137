#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "orchard/layers.hpp"
#include "orchard/tensor.hpp"

namespace orchard {

enum class ModelVariant { mini_inception, mini_resnet, custom };

std::string to_string(ModelVariant v);
ModelVariant parse_model_variant(const std::string& name);

struct ModelConfig {
  ModelVariant variant = ModelVariant::mini_inception;
  std::size_t input_height = 64;
  std::size_t input_width = 64;
  std::size_t input_channels = 3;
  // Stage widths; block b uses stage floor(b * stages / num_blocks).
  std::vector<std::size_t> channels{16, 32};
  std::size_t num_blocks = 2;
  std::size_t num_classes = 3;

  // Every violated constraint, empty when valid.
  std::vector<std::string> validation_errors() const;
  void validate() const;
  std::size_t stage_of_block(std::size_t block) const;
  std::size_t downsampling_factor() const;
};

/// Classifier = convolutional feature stack followed by a head (GAP -> dense).
/// The head's output are logits; softmax is applied by forward()/predict.
class ModelGraph {
 public:
  ModelGraph(ModelConfig config, Sequential features, Sequential head, std::vector<std::string> class_names = {});
  ModelGraph(const ModelGraph& other);
  ModelGraph& operator=(const ModelGraph& other);
  ModelGraph(ModelGraph&&) noexcept = default;
  ModelGraph& operator=(ModelGraph&&) noexcept = default;

  const ModelConfig& config() const { return config_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  void set_class_names(std::vector<std::string> names);
  std::size_t num_classes() const { return config_.num_classes; }

  Sequential& features() { return features_; }
  const Sequential& features() const { return features_; }
  Sequential& head() { return head_; }
  const Sequential& head() const { return head_; }

  /// Inference path (no caches). batch: N x C x H x W with the configured H, W.
  Tensor logits(const Tensor& batch) const;
  Tensor forward(const Tensor& batch) const;

  /// Training path: caches activations, returns logits.
  Tensor train_forward(const Tensor& batch);
  /// Backpropagates d(loss)/d(logits); accumulates parameter gradients.
  Tensor backward(const Tensor& logits_grad);

  std::vector<ParamRef> params();
  std::size_t parameter_count();
  void zero_grad();

  void append_pattern(std::vector<std::uint32_t>& out) const;
  void check_input(const Tensor& batch) const;

 private:
  void check_unique_names();

  ModelConfig config_;
  Sequential features_;
  Sequential head_;
  std::vector<std::string> class_names_;
};

ModelGraph build_mini_inception(const ModelConfig& config);
ModelGraph build_mini_resnet(const ModelConfig& config);
ModelGraph build_model(const ModelConfig& config);

/// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
void init_parameters(ModelGraph& model, std::uint64_t seed);

struct Prediction {
  std::size_t class_index = 0;
  std::vector<float> probs;
};

/// image: 3 x H x W or 1 x 3 x H x W. Ties break to the lowest class index.
Prediction predict_class(const ModelGraph& model, const Tensor& image);

std::size_t argmax(std::span<const float> values);

}  // namespace orchard
