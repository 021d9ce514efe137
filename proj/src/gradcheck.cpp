#include "orchard/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "orchard/errors.hpp"
#include "orchard/ops.hpp"

namespace orchard {

namespace {

struct CheckedTensor {
  std::string name;
  Tensor* value;
  Tensor analytic;
};

// Runs central differences on every coordinate of every tensor. `loss` must
// run a caching forward pass so `pattern` reflects the perturbed point.
GradCheckReport compare(std::vector<CheckedTensor>& tensors, const std::function<double()>& loss,
                        const std::function<std::vector<std::uint32_t>()>& pattern,
                        const GradCheckOptions& options) {
  GradCheckReport report;
  loss();
  const std::vector<std::uint32_t> base_pattern = pattern();
  const float h = options.step;

  for (CheckedTensor& t : tensors) {
    if (!t.analytic.all_finite()) throw NumericError("non-finite analytic gradient for " + t.name);
    double max_diff = 0.0, max_a = 0.0, max_n = 0.0;
    for (std::size_t i = 0; i < t.value->size(); ++i) {
      float& x = (*t.value)[i];
      const float saved = x;
      x = saved + h;
      const double plus = loss();
      const bool same_plus = pattern() == base_pattern;
      x = saved - h;
      const double minus = loss();
      const bool same_minus = pattern() == base_pattern;
      x = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw NumericError("non-finite loss while perturbing " + t.name);
      }
      if (!same_plus || !same_minus) {
        ++report.skipped;
        continue;
      }
      // Divide by the step actually representable around x.
      const double step = (static_cast<double>(saved + h) - static_cast<double>(saved - h));
      const double numeric = (plus - minus) / step;
      const double analytic = t.analytic[i];
      max_diff = std::max(max_diff, std::abs(analytic - numeric));
      max_a = std::max(max_a, std::abs(analytic));
      max_n = std::max(max_n, std::abs(numeric));
      ++report.checked;
    }
    const double rel = max_diff / std::max({max_a, max_n, options.scale_floor});
    if (report.worst_tensor.empty() || rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_tensor = t.name;
    }
  }
  loss();
  return report;
}

}  // namespace

GradCheckReport gradient_check(Layer& layer, const Shape& input_shape, std::uint64_t seed,
                               const GradCheckOptions& options) {
  Rng rng(seed);
  Tensor input = random_uniform(input_shape, options.input_lo, options.input_hi, rng);
  if (options.min_abs_input > 0.0f) {
    for (float& v : input.data()) {
      if (std::abs(v) < options.min_abs_input) v = std::copysign(options.min_abs_input + std::abs(v), v);
    }
  }
  std::vector<ParamRef> params;
  layer.collect_params(params);
  if (options.randomize_params) {
    for (ParamRef& p : params) *p.value = random_uniform(p.value->shape(), -0.5f, 0.5f, rng);
  }
  const Tensor projection = random_uniform(layer.output_shape(input_shape), -1.0f, 1.0f, rng);

  auto loss = [&]() {
    const Tensor out = layer.forward(input);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += static_cast<double>(projection[i]) * out[i];
    return s;
  };
  auto pattern = [&]() {
    std::vector<std::uint32_t> p;
    layer.append_pattern(p);
    return p;
  };

  for (ParamRef& p : params) p.grad->fill(0.0f);
  const Tensor out = layer.forward(input);
  if (!out.all_finite()) throw NumericError(std::string(layer.kind()) + ": non-finite forward output");
  if (out.shape() != projection.shape()) {
    throw ShapeError(std::string(layer.kind()) + ": runtime output " + shape_str(out.shape()) +
                     " differs from declared " + shape_str(projection.shape()));
  }
  Tensor input_grad = layer.backward(projection);
  if (input_grad.shape() != input.shape()) {
    throw ShapeError(std::string(layer.kind()) + ": input gradient shape " + shape_str(input_grad.shape()) +
                     " differs from input " + shape_str(input.shape()));
  }

  std::vector<CheckedTensor> tensors;
  tensors.push_back({"input", &input, std::move(input_grad)});
  for (ParamRef& p : params) {
    if (p.grad->shape() != p.value->shape()) throw ShapeError(p.name + ": gradient shape mismatch");
    tensors.push_back({p.name, p.value, *p.grad});
  }
  return compare(tensors, loss, pattern, options);
}

GradCheckReport model_gradient_check(ModelGraph& model, std::size_t batch, std::uint64_t seed,
                                     const GradCheckOptions& options) {
  init_parameters(model, seed);
  Rng rng(derive_seed(seed, 1));
  const ModelConfig& cfg = model.config();
  Tensor input = random_uniform({batch, cfg.input_channels, cfg.input_height, cfg.input_width}, 0.0f, 1.0f, rng);
  Tensor labels = random_uniform({batch, cfg.num_classes}, 0.05f, 1.0f, rng);
  for (std::size_t n = 0; n < batch; ++n) {
    double s = 0.0;
    for (std::size_t k = 0; k < cfg.num_classes; ++k) s += labels[n * cfg.num_classes + k];
    for (std::size_t k = 0; k < cfg.num_classes; ++k) {
      labels[n * cfg.num_classes + k] = static_cast<float>(labels[n * cfg.num_classes + k] / s);
    }
  }

  auto loss = [&]() { return cross_entropy(softmax(model.train_forward(input)), labels); };
  auto pattern = [&]() {
    std::vector<std::uint32_t> p;
    model.append_pattern(p);
    return p;
  };

  model.zero_grad();
  const Tensor probs = softmax(model.train_forward(input));
  Tensor input_grad = model.backward(softmax_cross_entropy_backward(probs, labels));

  std::vector<CheckedTensor> tensors;
  tensors.push_back({"input", &input, std::move(input_grad)});
  for (ParamRef& p : model.params()) tensors.push_back({p.name, p.value, *p.grad});
  return compare(tensors, loss, pattern, options);
}

}  // namespace orchard
