#include "orchard/optim.hpp"

#include <cmath>

#include "orchard/errors.hpp"

namespace orchard {

void AdamState::reset(const std::vector<ParamRef>& params) {
  step = 0;
  names.clear();
  m.clear();
  v.clear();
  for (const auto& p : params) {
    names.push_back(p.name);
    m.emplace_back(p.value->shape());
    v.emplace_back(p.value->shape());
  }
}

void adam_step(std::vector<ParamRef>& params, AdamState& state, double learning_rate) {
  if (!state.initialized()) state.reset(params);
  if (state.names.size() != params.size()) {
    throw ShapeError("adam: state tracks " + std::to_string(state.names.size()) + " tensors, model has " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamRef& p = params[i];
    if (state.names[i] != p.name || state.m[i].shape() != p.value->shape() || p.grad->shape() != p.value->shape()) {
      throw ShapeError("adam: state/gradient mismatch for parameter '" + p.name + "'");
    }
    if (!p.grad->all_finite()) throw NumericError("adam: non-finite gradient in parameter '" + p.name + "'");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    float* w = params[i].value->raw();
    const float* g = params[i].grad->raw();
    float* m = state.m[i].raw();
    float* v = state.v[i].raw();
    for (std::size_t k = 0, n = params[i].value->size(); k < n; ++k) {
      const double gk = g[k];
      const double mk = state.beta1 * m[k] + (1.0 - state.beta1) * gk;
      const double vk = state.beta2 * v[k] + (1.0 - state.beta2) * gk * gk;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      w[k] = static_cast<float>(w[k] - learning_rate * (mk / c1) / (std::sqrt(vk / c2) + state.epsilon));
    }
  }
}

}  // namespace orchard
