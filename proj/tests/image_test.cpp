#include <gtest/gtest.h>

#include <png.h>

#include <cmath>
#include <fstream>

#include "dreamblend/error.hpp"
#include "dreamblend/image.hpp"
#include "support/testing.hpp"

namespace dreamblend {
namespace {

namespace fs = std::filesystem;

void write_rgba(const fs::path& path, std::size_t w, std::size_t h, const std::vector<std::uint8_t>& rgba) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_RGBA;
  ASSERT_TRUE(png_image_write_to_file(&image, path.string().c_str(), 0, rgba.data(), 0, nullptr));
}

TEST(ImageTest, RoundTripsSmallImages) {
  const auto dir = testing::temp_dir("img");
  const ImageBuffer white(1, 1, {255, 255, 255});
  encode_png(white, dir / "w.png");
  EXPECT_EQ(decode_png(dir / "w.png"), white);

  const ImageBuffer rgbw(2, 2, {255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255});
  encode_png(rgbw, dir / "rgbw.png");
  const auto back = decode_png(dir / "rgbw.png");
  EXPECT_EQ(back, rgbw);
  EXPECT_EQ(back.pixel(1, 0)[1], 255);
  EXPECT_EQ(back.pixel(0, 1)[2], 255);
}

TEST(ImageTest, RejectsMissingAndNonPngFiles) {
  const auto dir = testing::temp_dir("img");
  std::ofstream(dir / "fake.png") << "this is not a png";
  EXPECT_THROW(decode_png(dir / "fake.png"), ImageError);
  EXPECT_THROW(decode_png(dir / "absent.png"), ImageError);
  EXPECT_THROW(ImageBuffer(2, 2, {1, 2, 3}), ImageError);
}

TEST(ImageTest, AlphaIsCompositedOverWhite) {
  const auto dir = testing::temp_dir("img");
  const std::vector<std::uint8_t> rgba{200, 0, 100, 128, 10, 20, 30, 255, 10, 20, 30, 0};
  write_rgba(dir / "a.png", 3, 1, rgba);
  const auto img = decode_png(dir / "a.png");
  for (std::size_t p = 0; p < 3; ++p) {
    const double a = rgba[4 * p + 3] / 255.0;
    for (std::size_t c = 0; c < 3; ++c) {
      const double expected = std::round(rgba[4 * p + c] * a + 255.0 * (1 - a));
      EXPECT_EQ(img.pixel(p, 0)[c], expected) << p << "," << c;
    }
  }
}

TEST(ImageTest, PreprocessRoundTripsEveryByte) {
  ImageBuffer img(256, 1);
  for (std::size_t x = 0; x < 256; ++x) {
    img.pixel(x, 0)[0] = static_cast<std::uint8_t>(x);
    img.pixel(x, 0)[1] = static_cast<std::uint8_t>(255 - x);
    img.pixel(x, 0)[2] = static_cast<std::uint8_t>((x * 7) % 256);
  }
  const Preprocess plain{};
  const Preprocess vgg{{103.939, 116.779, 123.68}, ChannelOrder::kBgr, 1.0};
  const Preprocess scaled{{0.485, 0.456, 0.406}, ChannelOrder::kRgb, 1.0 / 255.0};
  for (const auto& pre : {plain, vgg, scaled}) {
    EXPECT_EQ(deprocess(preprocess<float>(img, pre), pre), img);
    EXPECT_EQ(deprocess(preprocess<double>(img, pre), pre), img);
  }
}

TEST(ImageTest, PreprocessChannelOrderAndMean) {
  const ImageBuffer img(1, 1, {10, 20, 30});
  const auto rgb = preprocess<double>(img, Preprocess{{1, 2, 3}, ChannelOrder::kRgb, 1.0});
  EXPECT_EQ(rgb, TensorD({3, 1, 1}, {9, 18, 27}));
  const auto bgr = preprocess<double>(img, Preprocess{{1, 2, 3}, ChannelOrder::kBgr, 1.0});
  EXPECT_EQ(bgr, TensorD({3, 1, 1}, {29, 18, 7}));
}

TEST(ImageTest, DeprocessClampsAndRounds) {
  const Preprocess pre{};
  const auto img = deprocess(TensorD({3, 1, 2}, {300, -5, 2.5, -2.5, 254.5, 0.49}), pre);
  EXPECT_EQ(img.pixel(0, 0)[0], 255);
  EXPECT_EQ(img.pixel(1, 0)[0], 0);
  EXPECT_EQ(img.pixel(0, 0)[1], 3);
  EXPECT_EQ(img.pixel(1, 0)[1], 0);
  EXPECT_EQ(img.pixel(0, 0)[2], 255);
  EXPECT_EQ(img.pixel(1, 0)[2], 0);
  EXPECT_THROW(deprocess(TensorD({1, 2, 2}), pre), ShapeError);
}

}  // namespace
}  // namespace dreamblend
