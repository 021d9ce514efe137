#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "orchard/image_io.hpp"
#include "orchard/model.hpp"
#include "orchard/tensor.hpp"

namespace orchard {

struct Heatmap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;  // row-major, in [0, 1]
  std::size_t target_class = 0;
};

/// Grad-CAM on the feature stack output (the last pre-GAP activations),
/// targeting the pre-softmax logit. image: 3 x H x W or 1 x 3 x H x W.
Heatmap grad_cam(const ModelGraph& model, const Tensor& image, std::size_t target_class);

struct Segmentation {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t count = 0;
  std::vector<std::uint32_t> labels;  // row-major segment ids in [0, count)
};

/// g x g rectangular tiles; the last row/column absorbs the remainder.
Segmentation grid_segments(std::size_t height, std::size_t width, std::size_t g);
Segmentation grid_segments(const Tensor& image, std::size_t g);

enum class MaskFill { mean_color, gray };

using KeepVector = std::vector<std::uint8_t>;

/// Dropped segments (keep[s] == 0) are filled with the per-channel mean or 0.5.
Tensor mask_segments(const Tensor& image, const Segmentation& seg, const KeepVector& keep,
                     MaskFill fill = MaskFill::mean_color);

/// Value of each coalition, evaluated in the order given.
using CoalitionBatchValue = std::function<std::vector<double>(const std::vector<KeepVector>&)>;

struct Attribution {
  std::vector<double> weights;  // one per segment
  double intercept = 0.0;
  double r2 = 0.0;                   // LIME weighted fit quality
  double base_value = 0.0;           // SHAP: v(nothing kept)
  double full_value = 0.0;           // SHAP: v(everything kept)
  double efficiency_residual = 0.0;  // SHAP: sum(weights) - (full - base)
  bool exact = false;                // SHAP: full enumeration was used
  std::size_t evaluations = 0;
};

inline constexpr double kLimeKernelWidth = 0.25;
inline constexpr double kLimeRidge = 1e-3;
inline constexpr std::size_t kShapExactMaxSegments = 10;

/// Weighted ridge surrogate over random keep-vectors (plus the all-ones one).
Attribution lime_fit(std::size_t segments, const CoalitionBatchValue& value, std::size_t n_samples, Rng& rng);
/// Shapley-kernel weighted least squares with the efficiency constraint;
/// exact enumeration up to kShapExactMaxSegments segments, sampled beyond.
Attribution kernel_shap_fit(std::size_t segments, const CoalitionBatchValue& value, std::size_t n_samples, Rng& rng);

/// Coalition values = model probability of target_class on masked images.
CoalitionBatchValue model_coalition_value(const ModelGraph& model, const Tensor& image, const Segmentation& seg,
                                          std::size_t target_class, MaskFill fill = MaskFill::mean_color);

Attribution lime_explain(const ModelGraph& model, const Tensor& image, const Segmentation& seg,
                         std::size_t n_samples, std::size_t target_class, Rng& rng);
Attribution kernel_shap(const ModelGraph& model, const Tensor& image, const Segmentation& seg,
                        std::size_t n_samples, std::size_t target_class, Rng& rng);

inline constexpr float kOverlayAlpha = 0.45f;

/// Jet colormap, blue (0) to red (1).
std::array<float, 3> jet(float v);

RgbImage render_heatmap_overlay(const Tensor& image, const Heatmap& heatmap);
/// Per-segment tint by sign (positive green, negative blue) scaled by |w|,
/// positive segments outlined in yellow.
RgbImage render_attribution_overlay(const Tensor& image, const Segmentation& seg, const Attribution& attribution);

void render_overlay(const Tensor& image, const Heatmap& heatmap, const std::filesystem::path& out_path);
void render_overlay(const Tensor& image, const Segmentation& seg, const Attribution& attribution,
                    const std::filesystem::path& out_path);

}  // namespace orchard
