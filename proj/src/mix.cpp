#include "orchard/mix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "orchard/errors.hpp"

namespace orchard {

std::vector<std::string> MixConfig::validation_errors() const {
  std::vector<std::string> errors;
  if (!(alpha_mixup >= 0.0) || !std::isfinite(alpha_mixup)) errors.push_back("alpha_mixup must be >= 0");
  if (!(alpha_cutmix >= 0.0) || !std::isfinite(alpha_cutmix)) errors.push_back("alpha_cutmix must be >= 0");
  return errors;
}

std::string to_string(MixKind kind) {
  switch (kind) {
    case MixKind::none: return "none";
    case MixKind::mixup: return "mixup";
    case MixKind::cutmix: return "cutmix";
  }
  return "?";
}

double sample_lambda(double alpha, Rng& rng) {
  if (alpha < 0.0) throw ConfigError("sample_lambda: alpha must be >= 0");
  if (alpha == 0.0) return 1.0;
  std::gamma_distribution<double> gamma(alpha, 1.0);
  for (;;) {
    const double g1 = gamma(rng), g2 = gamma(rng);
    if (g1 + g2 > 0.0) return g1 / (g1 + g2);
  }
}

namespace {

void check_batch(const Tensor& images, const Tensor& labels, std::span<const std::size_t> perm) {
  if (images.rank() != 4) throw ShapeError("mix: images must be N x C x H x W, got " + shape_str(images.shape()));
  if (labels.rank() != 2) throw ShapeError("mix: labels must be N x K, got " + shape_str(labels.shape()));
  const std::size_t n = images.dim(0);
  if (labels.dim(0) != n) {
    throw ShapeError("mix: image batch (" + std::to_string(n) + ") != label batch (" + std::to_string(labels.dim(0)) +
                     ")");
  }
  if (perm.size() != n) throw ShapeError("mix: permutation length != batch size");
  std::vector<bool> hit(n, false);
  for (std::size_t p : perm) {
    if (p >= n || hit[p]) throw ShapeError("mix: pairing is not a permutation of the batch");
    hit[p] = true;
  }
}

Tensor blend_rows(const Tensor& t, double lambda, std::span<const std::size_t> perm) {
  const std::size_t n = t.dim(0), row = t.size() / n;
  Tensor out(t.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const float* a = t.raw() + i * row;
    const float* b = t.raw() + perm[i] * row;
    float* o = out.raw() + i * row;
    for (std::size_t k = 0; k < row; ++k) o[k] = static_cast<float>(lambda * a[k] + (1.0 - lambda) * b[k]);
  }
  return out;
}

}  // namespace

MixedBatch mixup(const Tensor& images, const Tensor& labels, double lambda, std::span<const std::size_t> perm) {
  check_batch(images, labels, perm);
  MixedBatch out;
  out.images = blend_rows(images, lambda, perm);
  out.labels = blend_rows(labels, lambda, perm);
  out.lambda_used = lambda;
  out.applied = MixKind::mixup;
  return out;
}

CutMixBox cutmix_box_at(std::size_t height, std::size_t width, double lambda, std::size_t cy, std::size_t cx) {
  const double side = std::sqrt(std::clamp(1.0 - lambda, 0.0, 1.0));
  const auto rw = static_cast<long long>(std::llround(static_cast<double>(width) * side));
  const auto rh = static_cast<long long>(std::llround(static_cast<double>(height) * side));
  const long long x1 = static_cast<long long>(cx) - rw / 2, y1 = static_cast<long long>(cy) - rh / 2;
  auto clip = [](long long v, std::size_t hi) {
    return static_cast<std::size_t>(std::clamp<long long>(v, 0, static_cast<long long>(hi)));
  };
  CutMixBox box;
  box.x1 = clip(x1, width);
  box.x2 = clip(x1 + rw, width);
  box.y1 = clip(y1, height);
  box.y2 = clip(y1 + rh, height);
  box.lambda_adjusted = 1.0 - static_cast<double>(box.area()) / static_cast<double>(height * width);
  return box;
}

CutMixBox cutmix_box(std::size_t height, std::size_t width, double lambda, Rng& rng) {
  std::uniform_int_distribution<std::size_t> ydist(0, height - 1), xdist(0, width - 1);
  const std::size_t cy = ydist(rng);
  const std::size_t cx = xdist(rng);
  return cutmix_box_at(height, width, lambda, cy, cx);
}

MixedBatch cutmix_with_box(const Tensor& images, const Tensor& labels, const CutMixBox& box,
                           std::span<const std::size_t> perm) {
  check_batch(images, labels, perm);
  const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  if (box.x2 > w || box.y2 > h || box.x1 > box.x2 || box.y1 > box.y2) throw ShapeError("cutmix: box outside image");
  MixedBatch out;
  out.images = images;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = box.y1; y < box.y2; ++y) {
        for (std::size_t x = box.x1; x < box.x2; ++x) out.images.at(i, ch, y, x) = images.at(perm[i], ch, y, x);
      }
    }
  }
  out.labels = blend_rows(labels, box.lambda_adjusted, perm);
  out.lambda_used = box.lambda_adjusted;
  out.box = box;
  out.applied = MixKind::cutmix;
  return out;
}

MixedBatch cutmix(const Tensor& images, const Tensor& labels, double lambda, std::span<const std::size_t> perm,
                  Rng& rng) {
  check_batch(images, labels, perm);
  return cutmix_with_box(images, labels, cutmix_box(images.dim(2), images.dim(3), lambda, rng), perm);
}

MixedBatch apply_mixers(const Tensor& images, const Tensor& labels, const MixConfig& config, Rng& rng) {
  const auto errors = config.validation_errors();
  if (!errors.empty()) throw ConfigError(errors.front());
  const bool use_mixup = config.alpha_mixup > 0.0, use_cutmix = config.alpha_cutmix > 0.0;
  if (!use_mixup && !use_cutmix) {
    MixedBatch out;
    out.images = images;
    out.labels = labels;
    return out;
  }
  MixKind kind = use_mixup ? MixKind::mixup : MixKind::cutmix;
  if (use_mixup && use_cutmix) kind = std::bernoulli_distribution(0.5)(rng) ? MixKind::mixup : MixKind::cutmix;
  std::vector<std::size_t> perm(images.dim(0));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  if (kind == MixKind::mixup) return mixup(images, labels, sample_lambda(config.alpha_mixup, rng), perm);
  const double lambda = sample_lambda(config.alpha_cutmix, rng);
  return cutmix(images, labels, lambda, perm, rng);
}

}  // namespace orchard
