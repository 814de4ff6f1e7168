#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tl/tensor.hpp"

namespace tl {

// 8-bit RGB, row-major, interleaved.
struct Image {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint8_t> rgb;

  Image() = default;
  Image(int64_t w, int64_t h) : width(w), height(h), rgb(static_cast<std::size_t>(w * h * 3), 0) {}
  uint8_t* pixel(int64_t x, int64_t y) { return rgb.data() + (y * width + x) * 3; }
  const uint8_t* pixel(int64_t x, int64_t y) const { return rgb.data() + (y * width + x) * 3; }
};

// PNG (any bit depth / colour type, converted to 8-bit RGB) or binary PPM (P6),
// chosen by file signature.
Image read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);
void write_ppm(const std::filesystem::path& path, const Image& img);

// Largest centred square, resized to size×size by area averaging.
Image center_crop_resize(const Image& img, int64_t size);

// 3×H×W in [−1, 1].
Tensor image_to_tensor(const Image& img);
// Accepts 3×H×W or 1×3×H×W; values are clamped to [−1, 1] and rounded.
Image tensor_to_image(const Tensor& t);

}  // namespace tl
