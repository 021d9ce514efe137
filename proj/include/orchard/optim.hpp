#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "orchard/layers.hpp"
#include "orchard/tensor.hpp"

namespace orchard {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::string> names;  // parameter order the moments follow
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  bool initialized() const { return !names.empty(); }
  /// Zero moments shaped like params; step reset to 0.
  void reset(const std::vector<ParamRef>& params);
};

/// Bias-corrected Adam update of every parameter from its accumulated grad.
/// Throws NumericError naming the parameter on a non-finite gradient; no
/// parameter is touched in that case.
void adam_step(std::vector<ParamRef>& params, AdamState& state, double learning_rate);

}  // namespace orchard
