#include "dreamblend/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "dreamblend/error.hpp"

namespace dreamblend {

ImageBuffer::ImageBuffer(std::size_t w, std::size_t h) : width(w), height(h), pixels(3 * w * h, 0) {
  if (w == 0 || h == 0) throw ImageError("image extents must be >= 1");
}

ImageBuffer::ImageBuffer(std::size_t w, std::size_t h, std::vector<std::uint8_t> rgb)
    : width(w), height(h), pixels(std::move(rgb)) {
  if (w == 0 || h == 0) throw ImageError("image extents must be >= 1");
  if (pixels.size() != 3 * w * h) {
    throw ImageError("expected " + std::to_string(3 * w * h) + " RGB bytes, got " +
                     std::to_string(pixels.size()));
  }
}

namespace {

// png_image must be released on every exit path.
struct PngImage {
  png_image image{};
  PngImage() { image.version = PNG_IMAGE_VERSION; }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

}  // namespace

ImageBuffer decode_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ImageError("cannot open " + path.string());
  PngImage png;
  if (!png_image_begin_read_from_file(&png.image, path.string().c_str())) {
    throw ImageError("corrupt or unsupported image " + path.string() + ": " + png.image.message);
  }
  png.image.format = PNG_FORMAT_RGBA;
  const std::size_t w = png.image.width, h = png.image.height;
  std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, rgba.data(), 0, nullptr)) {
    throw ImageError("corrupt image " + path.string() + ": " + png.image.message);
  }

  ImageBuffer out(w, h);
  for (std::size_t i = 0; i < w * h; ++i) {
    const unsigned a = rgba[4 * i + 3];
    for (std::size_t c = 0; c < 3; ++c) {
      const unsigned v = rgba[4 * i + c];
      // Integer over-white composite, rounded to nearest.
      out.pixels[3 * i + c] = static_cast<std::uint8_t>((v * a + 255u * (255u - a) + 127u) / 255u);
    }
  }
  return out;
}

void encode_png(const ImageBuffer& image, const std::filesystem::path& path) {
  if (image.pixels.size() != 3 * image.width * image.height || image.width == 0) {
    throw ImageError("encode_png: malformed image buffer");
  }
  PngImage png;
  png.image.width = static_cast<png_uint_32>(image.width);
  png.image.height = static_cast<png_uint_32>(image.height);
  png.image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png.image, path.string().c_str(), 0, image.pixels.data(), 0,
                               nullptr)) {
    throw ImageError("cannot write " + path.string() + ": " + png.image.message);
  }
}

template <typename Real>
BasicTensor<Real> preprocess(const ImageBuffer& image, const Preprocess& pre) {
  BasicTensor<Real> t({3, image.height, image.width});
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t src = pre.channel_order == ChannelOrder::kRgb ? c : 2 - c;
    for (std::size_t y = 0; y < image.height; ++y) {
      for (std::size_t x = 0; x < image.width; ++x) {
        t.at(c, y, x) =
            static_cast<Real>(pre.pixel_scale * image.pixel(x, y)[src] - pre.mean[c]);
      }
    }
  }
  return t;
}

template <typename Real>
ImageBuffer deprocess(const BasicTensor<Real>& t, const Preprocess& pre) {
  if (t.rank() != 3 || t.channels() != 3) {
    throw ShapeError("deprocess: expected a [3,H,W] tensor, got " + shape_string(t.shape()));
  }
  ImageBuffer image(t.width(), t.height());
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t dst = pre.channel_order == ChannelOrder::kRgb ? c : 2 - c;
    for (std::size_t y = 0; y < image.height; ++y) {
      for (std::size_t x = 0; x < image.width; ++x) {
        const double raw = (static_cast<double>(t.at(c, y, x)) + pre.mean[c]) / pre.pixel_scale;
        // std::round rounds halves away from zero.
        const double v = std::clamp(std::round(raw), 0.0, 255.0);
        image.pixel(x, y)[dst] = static_cast<std::uint8_t>(v);
      }
    }
  }
  return image;
}

template BasicTensor<float> preprocess<float>(const ImageBuffer&, const Preprocess&);
template BasicTensor<double> preprocess<double>(const ImageBuffer&, const Preprocess&);
template ImageBuffer deprocess(const BasicTensor<float>&, const Preprocess&);
template ImageBuffer deprocess(const BasicTensor<double>&, const Preprocess&);

}  // namespace dreamblend
