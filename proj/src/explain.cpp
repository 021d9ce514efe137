#include "orchard/explain.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "orchard/errors.hpp"
#include "orchard/ops.hpp"

namespace orchard {

namespace {

Tensor as_batch(const Tensor& image) {
  if (image.rank() == 3) return image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)});
  if (image.rank() == 4 && image.dim(0) == 1) return image;
  throw ShapeError("expected a single image (3 x H x W), got " + shape_str(image.shape()));
}

Tensor as_chw(const Tensor& image) {
  const Tensor b = as_batch(image);
  return b.reshaped({b.dim(1), b.dim(2), b.dim(3)});
}

}  // namespace

Heatmap grad_cam(const ModelGraph& model, const Tensor& image, std::size_t target_class) {
  const Tensor x = as_batch(image);
  model.check_input(x);
  if (target_class >= model.num_classes()) {
    throw ConfigError("grad_cam: target class " + std::to_string(target_class) + " out of range");
  }
  if (model.features().size() == 0) throw ConfigError("grad_cam: model has no convolutional stage");
  const Tensor activations = model.features().infer(x);
  if (activations.rank() != 4) {
    throw ConfigError("grad_cam: feature stack output is not a spatial map: " + shape_str(activations.shape()));
  }
  Sequential head = model.head();
  Tensor logits = head.forward(activations);
  Tensor upstream(logits.shape());
  upstream[target_class] = 1.0f;
  const Tensor grads = head.backward(upstream);

  const std::size_t k = activations.dim(1), h = activations.dim(2), w = activations.dim(3), hw = h * w;
  std::vector<double> cam(hw, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    double weight = 0.0;
    for (std::size_t i = 0; i < hw; ++i) weight += grads[c * hw + i];
    weight /= static_cast<double>(hw);
    for (std::size_t i = 0; i < hw; ++i) cam[i] += weight * activations[c * hw + i];
  }
  double peak = 0.0;
  for (double& v : cam) {
    v = std::max(0.0, v);
    peak = std::max(peak, v);
  }
  Tensor small({1, h, w});
  for (std::size_t i = 0; i < hw; ++i) small[i] = peak > 0.0 ? static_cast<float>(cam[i] / peak) : 0.0f;
  const Tensor up = resize_bilinear(small, x.dim(2), x.dim(3));

  Heatmap out;
  out.height = x.dim(2);
  out.width = x.dim(3);
  out.target_class = target_class;
  out.values.assign(up.data().begin(), up.data().end());
  for (float& v : out.values) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

Segmentation grid_segments(std::size_t height, std::size_t width, std::size_t g) {
  if (g < 1) throw ConfigError("grid_segments: g must be >= 1");
  if (g > std::min(height, width)) {
    throw ConfigError("grid_segments: g = " + std::to_string(g) + " exceeds min(H, W) = " +
                      std::to_string(std::min(height, width)));
  }
  Segmentation seg;
  seg.height = height;
  seg.width = width;
  seg.count = g * g;
  seg.labels.resize(height * width);
  const std::size_t th = height / g, tw = width / g;
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t row = std::min(y / th, g - 1);
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t col = std::min(x / tw, g - 1);
      seg.labels[y * width + x] = static_cast<std::uint32_t>(row * g + col);
    }
  }
  return seg;
}

Segmentation grid_segments(const Tensor& image, std::size_t g) {
  const Tensor chw = as_chw(image);
  return grid_segments(chw.dim(1), chw.dim(2), g);
}

Tensor mask_segments(const Tensor& image, const Segmentation& seg, const KeepVector& keep, MaskFill fill) {
  Tensor out = as_chw(image);
  const std::size_t c = out.dim(0), hw = out.dim(1) * out.dim(2);
  if (out.dim(1) != seg.height || out.dim(2) != seg.width) throw ShapeError("mask_segments: segmentation size mismatch");
  if (keep.size() != seg.count) {
    throw ShapeError("mask_segments: keep vector has " + std::to_string(keep.size()) + " entries for " +
                     std::to_string(seg.count) + " segments");
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    float value = 0.5f;
    if (fill == MaskFill::mean_color) {
      double sum = 0.0;
      for (std::size_t i = 0; i < hw; ++i) sum += out[ch * hw + i];
      value = static_cast<float>(sum / static_cast<double>(hw));
    }
    for (std::size_t i = 0; i < hw; ++i) {
      if (!keep[seg.labels[i]]) out[ch * hw + i] = value;
    }
  }
  return out;
}

namespace {

double kept_fraction(const KeepVector& z) {
  return static_cast<double>(std::count(z.begin(), z.end(), 1)) / static_cast<double>(z.size());
}

std::vector<double> evaluate(const CoalitionBatchValue& value, const std::vector<KeepVector>& coalitions) {
  std::vector<double> out = value(coalitions);
  if (out.size() != coalitions.size()) throw ShapeError("coalition value function returned the wrong count");
  return out;
}

}  // namespace

Attribution lime_fit(std::size_t segments, const CoalitionBatchValue& value, std::size_t n_samples, Rng& rng) {
  if (segments < 1) throw ConfigError("lime: need at least one segment");
  if (n_samples < segments + 1) {
    throw ConfigError("lime: n_samples (" + std::to_string(n_samples) + ") must be >= segments + 1 (" +
                      std::to_string(segments + 1) + ")");
  }
  std::vector<KeepVector> zs;
  zs.push_back(KeepVector(segments, 1));
  std::bernoulli_distribution bit(0.5);
  while (zs.size() < n_samples) {
    KeepVector z(segments);
    for (auto& b : z) b = bit(rng) ? 1 : 0;
    zs.push_back(std::move(z));
  }
  const std::vector<double> y = evaluate(value, zs);

  const std::size_t p = segments + 1;
  Eigen::MatrixXd xtwx = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xtwy = Eigen::VectorXd::Zero(p);
  std::vector<double> w(n_samples);
  Eigen::VectorXd row(p);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double d = 1.0 - kept_fraction(zs[i]);
    w[i] = std::exp(-d * d / (kLimeKernelWidth * kLimeKernelWidth));
    row[0] = 1.0;
    for (std::size_t s = 0; s < segments; ++s) row[s + 1] = zs[i][s];
    xtwx.noalias() += w[i] * row * row.transpose();
    xtwy += w[i] * y[i] * row;
  }
  for (std::size_t s = 1; s < p; ++s) xtwx(s, s) += kLimeRidge;

  Attribution a;
  a.evaluations = n_samples;
  a.weights.assign(segments, 0.0);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(xtwx);
  const Eigen::VectorXd beta = ldlt.solve(xtwy);
  if (ldlt.info() != Eigen::Success || !beta.allFinite()) return a;

  double wsum = 0.0, wy = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    wsum += w[i];
    wy += w[i] * y[i];
  }
  const double ybar = wy / wsum;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    double pred = beta[0];
    for (std::size_t s = 0; s < segments; ++s) pred += beta[s + 1] * zs[i][s];
    ss_res += w[i] * (y[i] - pred) * (y[i] - pred);
    ss_tot += w[i] * (y[i] - ybar) * (y[i] - ybar);
  }
  a.intercept = beta[0];
  for (std::size_t s = 0; s < segments; ++s) a.weights[s] = beta[s + 1];
  a.r2 = ss_tot > 1e-18 ? 1.0 - ss_res / ss_tot : 0.0;
  return a;
}

namespace {

double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

// Constrained WLS: minimise sum w (y - base - z.phi)^2 subject to sum phi = delta,
// by eliminating the last coordinate.
std::vector<double> solve_efficient_wls(const std::vector<KeepVector>& zs, const std::vector<double>& y,
                                        const std::vector<double>& w, double base, double delta, std::size_t m) {
  if (m == 1) return {delta};
  const std::size_t p = m - 1;
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd atb = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd row(p);
  for (std::size_t i = 0; i < zs.size(); ++i) {
    const double last = zs[i][m - 1];
    for (std::size_t j = 0; j < p; ++j) row[j] = zs[i][j] - last;
    const double target = y[i] - base - last * delta;
    ata.noalias() += w[i] * row * row.transpose();
    atb += w[i] * target * row;
  }
  const Eigen::VectorXd head = ata.colPivHouseholderQr().solve(atb);
  std::vector<double> phi(m);
  double sum = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    phi[j] = head[j];
    sum += head[j];
  }
  phi[m - 1] = delta - sum;
  return phi;
}

}  // namespace

Attribution kernel_shap_fit(std::size_t segments, const CoalitionBatchValue& value, std::size_t n_samples, Rng& rng) {
  if (segments < 1) throw ConfigError("kernel_shap: need at least one segment");
  const std::size_t m = segments;
  const std::vector<double> bounds = evaluate(value, {KeepVector(m, 0), KeepVector(m, 1)});
  Attribution a;
  a.base_value = bounds[0];
  a.full_value = bounds[1];
  a.intercept = a.base_value;
  const double delta = a.full_value - a.base_value;

  std::vector<KeepVector> zs;
  std::vector<double> w;
  if (m <= kShapExactMaxSegments) {
    a.exact = true;
    for (std::uint32_t mask = 1; mask + 1 < (1u << m); ++mask) {
      KeepVector z(m);
      std::size_t k = 0;
      for (std::size_t s = 0; s < m; ++s) {
        z[s] = (mask >> s) & 1u;
        k += z[s];
      }
      zs.push_back(std::move(z));
      w.push_back(static_cast<double>(m - 1) / (binomial(m, k) * static_cast<double>(k) * static_cast<double>(m - k)));
    }
  } else {
    if (n_samples < 1) throw ConfigError("kernel_shap: sampled mode needs n_samples >= 1");
    // Coalition sizes drawn proportionally to the total kernel mass of each size.
    std::vector<double> size_mass;
    for (std::size_t k = 1; k < m; ++k) size_mass.push_back(1.0 / (static_cast<double>(k) * static_cast<double>(m - k)));
    std::discrete_distribution<std::size_t> size_dist(size_mass.begin(), size_mass.end());
    std::vector<std::size_t> idx(m);
    for (std::size_t i = 0; i < n_samples; ++i) {
      const std::size_t k = size_dist(rng) + 1;
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      KeepVector z(m, 0);
      for (std::size_t j = 0; j < k; ++j) z[idx[j]] = 1;
      zs.push_back(std::move(z));
      w.push_back(1.0);
    }
  }
  const std::vector<double> y = zs.empty() ? std::vector<double>{} : evaluate(value, zs);
  a.evaluations = zs.size() + 2;
  a.weights = solve_efficient_wls(zs, y, w, a.base_value, delta, m);
  a.efficiency_residual = std::accumulate(a.weights.begin(), a.weights.end(), 0.0) - delta;
  return a;
}

CoalitionBatchValue model_coalition_value(const ModelGraph& model, const Tensor& image, const Segmentation& seg,
                                          std::size_t target_class, MaskFill fill) {
  if (target_class >= model.num_classes()) throw ConfigError("target class out of range");
  const Tensor chw = as_chw(image);
  model.check_input(as_batch(chw));
  return [&model, chw, seg, target_class, fill](const std::vector<KeepVector>& zs) {
    constexpr std::size_t kBatch = 32;
    const std::size_t c = chw.dim(0), h = chw.dim(1), w = chw.dim(2), n_img = c * h * w;
    std::vector<double> out;
    out.reserve(zs.size());
    for (std::size_t first = 0; first < zs.size(); first += kBatch) {
      const std::size_t n = std::min(kBatch, zs.size() - first);
      Tensor batch({n, c, h, w});
      for (std::size_t i = 0; i < n; ++i) {
        const Tensor masked = mask_segments(chw, seg, zs[first + i], fill);
        std::copy(masked.raw(), masked.raw() + n_img, batch.raw() + i * n_img);
      }
      const Tensor probs = model.forward(batch);
      for (std::size_t i = 0; i < n; ++i) out.push_back(probs[i * model.num_classes() + target_class]);
    }
    return out;
  };
}

Attribution lime_explain(const ModelGraph& model, const Tensor& image, const Segmentation& seg,
                         std::size_t n_samples, std::size_t target_class, Rng& rng) {
  return lime_fit(seg.count, model_coalition_value(model, image, seg, target_class), n_samples, rng);
}

Attribution kernel_shap(const ModelGraph& model, const Tensor& image, const Segmentation& seg,
                        std::size_t n_samples, std::size_t target_class, Rng& rng) {
  return kernel_shap_fit(seg.count, model_coalition_value(model, image, seg, target_class), n_samples, rng);
}

std::array<float, 3> jet(float v) {
  v = std::clamp(v, 0.0f, 1.0f);
  auto ch = [v](float centre) { return std::clamp(1.5f - std::abs(4.0f * v - centre), 0.0f, 1.0f); };
  return {ch(3.0f), ch(2.0f), ch(1.0f)};
}

namespace {

void blend(const Tensor& chw, std::size_t i, const std::array<float, 3>& colour, float alpha, Tensor& out) {
  const std::size_t hw = chw.dim(1) * chw.dim(2);
  for (std::size_t c = 0; c < 3; ++c) out[c * hw + i] = (1.0f - alpha) * chw[c * hw + i] + alpha * colour[c];
}

}  // namespace

RgbImage render_heatmap_overlay(const Tensor& image, const Heatmap& heatmap) {
  const Tensor chw = as_chw(image);
  if (chw.dim(0) != 3 || chw.dim(1) != heatmap.height || chw.dim(2) != heatmap.width) {
    throw ShapeError("render: heatmap size does not match the image");
  }
  Tensor out(chw.shape());
  for (std::size_t i = 0; i < heatmap.values.size(); ++i) blend(chw, i, jet(heatmap.values[i]), kOverlayAlpha, out);
  return to_rgb8(out);
}

RgbImage render_attribution_overlay(const Tensor& image, const Segmentation& seg, const Attribution& attribution) {
  const Tensor chw = as_chw(image);
  if (chw.dim(0) != 3 || chw.dim(1) != seg.height || chw.dim(2) != seg.width) {
    throw ShapeError("render: segmentation size does not match the image");
  }
  if (attribution.weights.size() != seg.count) throw ShapeError("render: attribution/segment count mismatch");
  double peak = 0.0;
  for (double v : attribution.weights) peak = std::max(peak, std::abs(v));
  const std::size_t h = seg.height, w = seg.width;
  Tensor out(chw.shape());
  for (std::size_t i = 0; i < h * w; ++i) {
    const double v = attribution.weights[seg.labels[i]];
    const float strength = peak > 0.0 ? static_cast<float>(std::abs(v) / peak) : 0.0f;
    const std::array<float, 3> tint = v >= 0.0 ? std::array<float, 3>{0.0f, 1.0f, 0.0f}
                                               : std::array<float, 3>{0.0f, 0.0f, 1.0f};
    blend(chw, i, tint, kOverlayAlpha * strength, out);
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::uint32_t s = seg.labels[y * w + x];
      if (!(attribution.weights[s] > 0.0)) continue;
      const bool edge = y == 0 || x == 0 || y + 1 == h || x + 1 == w || seg.labels[(y - 1) * w + x] != s ||
                        seg.labels[(y + 1) * w + x] != s || seg.labels[y * w + x - 1] != s ||
                        seg.labels[y * w + x + 1] != s;
      if (edge) blend(chw, y * w + x, {1.0f, 1.0f, 0.0f}, 1.0f, out);
    }
  }
  return to_rgb8(out);
}

void render_overlay(const Tensor& image, const Heatmap& heatmap, const std::filesystem::path& out_path) {
  write_png(out_path, render_heatmap_overlay(image, heatmap));
}

void render_overlay(const Tensor& image, const Segmentation& seg, const Attribution& attribution,
                    const std::filesystem::path& out_path) {
  write_png(out_path, render_attribution_overlay(image, seg, attribution));
}

}  // namespace orchard
