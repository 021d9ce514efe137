#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "orchard/tensor.hpp"

namespace orchard {

struct MixConfig {
  double alpha_mixup = 0.0;
  double alpha_cutmix = 0.0;
  std::uint64_t seed = 0;

  std::vector<std::string> validation_errors() const;
};

/// Half-open pixel box [x1, x2) x [y1, y2).
struct CutMixBox {
  std::size_t x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double lambda_adjusted = 1.0;

  std::size_t area() const { return (x2 - x1) * (y2 - y1); }
};

enum class MixKind { none, mixup, cutmix };
std::string to_string(MixKind kind);

struct MixedBatch {
  Tensor images;  // N x C x H x W
  Tensor labels;  // N x K soft labels
  double lambda_used = 1.0;
  std::optional<CutMixBox> box;
  MixKind applied = MixKind::none;
};

/// Beta(alpha, alpha) via two Gamma(alpha, 1) draws; exactly 1 when alpha is 0.
double sample_lambda(double alpha, Rng& rng);

/// a' = lambda a + (1 - lambda) a[perm], same for labels.
MixedBatch mixup(const Tensor& images, const Tensor& labels, double lambda, std::span<const std::size_t> perm);

/// Box of side round(dim * sqrt(1 - lambda)) centred at (cy, cx), clipped.
CutMixBox cutmix_box_at(std::size_t height, std::size_t width, double lambda, std::size_t cy, std::size_t cx);
/// As cutmix_box_at with a uniformly drawn integer centre.
CutMixBox cutmix_box(std::size_t height, std::size_t width, double lambda, Rng& rng);

/// Pixels inside the box come from the partner; labels weighted by the retained area.
MixedBatch cutmix_with_box(const Tensor& images, const Tensor& labels, const CutMixBox& box,
                           std::span<const std::size_t> perm);
MixedBatch cutmix(const Tensor& images, const Tensor& labels, double lambda, std::span<const std::size_t> perm,
                  Rng& rng);

/// One mixer per batch: 50/50 when both alphas are positive, the enabled one
/// when only one is, passthrough when neither.
MixedBatch apply_mixers(const Tensor& images, const Tensor& labels, const MixConfig& config, Rng& rng);

}  // namespace orchard
