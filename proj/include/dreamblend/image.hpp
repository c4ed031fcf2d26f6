#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dreamblend/network.hpp"
#include "dreamblend/tensor.hpp"

namespace dreamblend {

/// 8-bit RGB pixels, row-major from the top-left corner.
struct ImageBuffer {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // 3 * width * height

  ImageBuffer() = default;
  ImageBuffer(std::size_t w, std::size_t h);
  ImageBuffer(std::size_t w, std::size_t h, std::vector<std::uint8_t> rgb);

  std::uint8_t* pixel(std::size_t x, std::size_t y) { return pixels.data() + 3 * (y * width + x); }
  const std::uint8_t* pixel(std::size_t x, std::size_t y) const {
    return pixels.data() + 3 * (y * width + x);
  }

  bool operator==(const ImageBuffer&) const = default;
};

/// Reads an 8-bit or 16-bit PNG of any colour type. Alpha is composited over
/// white. Throws ImageError for unreadable or non-PNG input.
ImageBuffer decode_png(const std::filesystem::path& path);
/// Writes an 8-bit RGB PNG.
void encode_png(const ImageBuffer& image, const std::filesystem::path& path);

/// t[c][y][x] = pixel_scale * raw[c'][y][x] - mean[c], where c' is the source
/// channel selected by the channel order.
template <typename Real>
BasicTensor<Real> preprocess(const ImageBuffer& image, const Preprocess& pre);
template <typename Real>
BasicTensor<Real> preprocess(const ImageBuffer& image, const NetworkSpec& net) {
  return preprocess<Real>(image, net.preprocess());
}

/// Inverse of preprocess, rounded half away from zero and clamped to [0, 255].
template <typename Real>
ImageBuffer deprocess(const BasicTensor<Real>& t, const Preprocess& pre);
template <typename Real>
ImageBuffer deprocess(const BasicTensor<Real>& t, const NetworkSpec& net) {
  return deprocess(t, net.preprocess());
}

}  // namespace dreamblend
