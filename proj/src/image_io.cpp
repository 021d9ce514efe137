#include "orchard/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

#include "orchard/errors.hpp"

namespace orchard {

namespace {

RgbImage decode_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw DataError("cannot decode PNG '" + path.string() + "': " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.width = img.width;
  out.height = img.height;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw DataError("cannot decode PNG '" + path.string() + "': " + msg);
  }
  return out;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

RgbImage decode_jpeg(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  RgbImage out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DataError("cannot decode JPEG '" + path.string() + "': " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = cinfo.output_width;
  out.height = cinfo.output_height;
  out.pixels.resize(out.width * out.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

}  // namespace

RgbImage decode_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  static constexpr std::uint8_t kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  RgbImage img;
  if (bytes.size() >= 8 && std::equal(kPngMagic, kPngMagic + 8, bytes.begin())) {
    img = decode_png(path);
  } else if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    img = decode_jpeg(path, bytes);
  } else {
    throw DataError("unrecognised image format in '" + path.string() + "' (expected PNG or JPEG)");
  }
  if (img.width == 0 || img.height == 0) throw DataError("empty image '" + path.string() + "'");
  return img;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw DataError("cannot write PNG '" + path.string() + "': " + img.message);
  }
}

Tensor to_tensor(const RgbImage& image) {
  const std::size_t h = image.height, w = image.width, hw = h * w;
  Tensor t({3, h, w});
  for (std::size_t i = 0; i < hw; ++i) {
    for (std::size_t c = 0; c < 3; ++c) t[c * hw + i] = static_cast<float>(image.pixels[i * 3 + c]) / 255.0f;
  }
  return t;
}

RgbImage to_rgb8(const Tensor& chw) {
  if (chw.rank() != 3 || chw.dim(0) != 3) throw ShapeError("to_rgb8 expects 3 x H x W, got " + shape_str(chw.shape()));
  RgbImage img;
  img.height = chw.dim(1);
  img.width = chw.dim(2);
  const std::size_t hw = img.height * img.width;
  img.pixels.resize(hw * 3);
  for (std::size_t i = 0; i < hw; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(chw[c * hw + i], 0.0f, 1.0f);
      img.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  }
  return img;
}

float sample_bilinear(const float* plane, std::size_t height, std::size_t width, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(height - 1));
  x = std::clamp(x, 0.0, static_cast<double>(width - 1));
  const std::size_t y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, height - 1);
  const std::size_t x1 = std::min(x0 + 1, width - 1);
  const double fy = y - static_cast<double>(y0);
  const double fx = x - static_cast<double>(x0);
  const double top = plane[y0 * width + x0] * (1.0 - fx) + plane[y0 * width + x1] * fx;
  const double bottom = plane[y1 * width + x0] * (1.0 - fx) + plane[y1 * width + x1] * fx;
  return static_cast<float>(top * (1.0 - fy) + bottom * fy);
}

Tensor resize_bilinear(const Tensor& chw, std::size_t height, std::size_t width) {
  if (chw.rank() != 3) throw ShapeError("resize_bilinear expects C x H x W, got " + shape_str(chw.shape()));
  const std::size_t c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  if (h == height && w == width) return chw;
  Tensor out({c, height, width});
  const double sy = static_cast<double>(h) / static_cast<double>(height);
  const double sx = static_cast<double>(w) / static_cast<double>(width);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* plane = chw.raw() + ch * h * w;
    float* dst = out.raw() + ch * height * width;
    for (std::size_t y = 0; y < height; ++y) {
      const double src_y = (static_cast<double>(y) + 0.5) * sy - 0.5;
      for (std::size_t x = 0; x < width; ++x) {
        const double src_x = (static_cast<double>(x) + 0.5) * sx - 0.5;
        dst[y * width + x] = sample_bilinear(plane, h, w, src_y, src_x);
      }
    }
  }
  return out;
}

}  // namespace orchard
