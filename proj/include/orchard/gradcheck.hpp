#pragma once

#include <cstdint>
#include <string>

#include "orchard/layers.hpp"
#include "orchard/model.hpp"

namespace orchard {

struct GradCheckOptions {
  float step = 1e-2f;
  float input_lo = -1.0f;
  float input_hi = 1.0f;
  // Inputs are pushed away from zero to at least this magnitude (relu kink).
  float min_abs_input = 0.0f;
  // Replace layer parameters with uniform(-0.5, 0.5) draws before checking.
  bool randomize_params = true;
  // Denominator floor for the relative error of near-zero gradient tensors.
  double scale_floor = 1e-2;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t checked = 0;
  // Coordinates whose +/-step perturbation changed a relu mask or pool winner.
  std::size_t skipped = 0;
};

/// Compares analytic gradients of L = sum(r * layer(x)), r random, against
/// central differences, tensor by tensor:
///   max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|, scale_floor)
/// Throws NumericError when a non-finite value shows up.
GradCheckReport gradient_check(Layer& layer, const Shape& input_shape, std::uint64_t seed,
                               const GradCheckOptions& options = {});

/// End-to-end check of softmax cross-entropy (random soft labels) through the
/// whole model, over every parameter and the input batch. Parameters are
/// He-initialised from the seed; inputs are uniform in [0, 1].
GradCheckReport model_gradient_check(ModelGraph& model, std::size_t batch, std::uint64_t seed,
                                     const GradCheckOptions& options = {});

}  // namespace orchard
