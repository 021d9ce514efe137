#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "orchard/tensor.hpp"

namespace orchard {

/// Interleaved 8-bit RGB pixels, row-major.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

/// Decodes PNG or JPEG (by magic bytes). Grayscale and palette sources are
/// promoted to RGB; alpha is dropped. Throws DataError naming the path.
RgbImage decode_image(const std::filesystem::path& path);

/// Fixed encoder settings, so identical pixels give identical bytes.
void write_png(const std::filesystem::path& path, const RgbImage& image);

/// 3 x H x W tensor with values scaled by 1/255.
Tensor to_tensor(const RgbImage& image);
/// Clamps to [0, 1] and rounds to the nearest 8-bit level.
RgbImage to_rgb8(const Tensor& chw);

/// Bilinear resampling with half-pixel centres and edge clamping. chw: C x H x W.
Tensor resize_bilinear(const Tensor& chw, std::size_t height, std::size_t width);

/// Bilinear sample of one channel at continuous (y, x), edge-replicated.
float sample_bilinear(const float* plane, std::size_t height, std::size_t width, double y, double x);

}  // namespace orchard
