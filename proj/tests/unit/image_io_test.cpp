#include <gtest/gtest.h>
#include <png.h>

#include <fstream>

#include "fixtures.hpp"
#include "flowedit/errors.hpp"
#include "flowedit/image.hpp"

namespace flowedit {
namespace {

Image gradient_image(int h, int w) {
  Image img(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(y, x, 0) = static_cast<float>((x * 37 + y * 11) % 256) / 255.0f;
      img.at(y, x, 1) = static_cast<float>((x * 5 + y * 91) % 256) / 255.0f;
      img.at(y, x, 2) = static_cast<float>((x * y) % 256) / 255.0f;
    }
  }
  return img;
}

TEST(ImageIo, PngRewriteIsByteIdentical) {
  testing::TempDir dir("png");
  write_png(dir / "a.png", gradient_image(13, 17));
  write_png(dir / "b.png", read_png(dir / "a.png"));
  EXPECT_EQ(testing::read_bytes(dir / "a.png"), testing::read_bytes(dir / "b.png"));
}

TEST(ImageIo, PngPixelsSurviveRoundTrip) {
  testing::TempDir dir("png");
  const Image img = gradient_image(9, 6);
  write_image(dir / "a.png", img);
  const Image back = read_image(dir / "a.png");
  ASSERT_EQ(back.height, 9);
  ASSERT_EQ(back.width, 6);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_EQ(to_u8(back.pixels[i]), to_u8(img.pixels[i]));
}

TEST(ImageIo, QuantizationRoundTrip) {
  for (int v = 0; v < 256; ++v) EXPECT_EQ(to_u8(static_cast<float>(v) / 255.0f), v);
  EXPECT_EQ(to_u8(128.0f / 255.0f), 128);
}

TEST(ImageIo, PpmRoundTrip) {
  testing::TempDir dir("ppm");
  const Image img = gradient_image(4, 7);
  write_image(dir / "a.ppm", img);
  const Image back = read_image(dir / "a.ppm");
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_EQ(to_u8(back.pixels[i]), to_u8(img.pixels[i]));
  const auto bytes = testing::read_bytes(dir / "a.ppm");
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 2), "P6");
}

TEST(ImageIo, RejectsSixteenBitPng) {
  testing::TempDir dir("png16");
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = 2;
  png.height = 2;
  png.format = PNG_FORMAT_LINEAR_RGB;
  std::vector<png_uint_16> data(2 * 2 * 3, 30000);
  const std::string path = (dir / "deep.png").string();
  ASSERT_TRUE(png_image_write_to_file(&png, path.c_str(), 0, data.data(), 0, nullptr));
  try {
    read_png(path);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("16-bit"), std::string::npos) << e.what();
  }
}

TEST(ImageIo, MissingAndCorruptFilesRaiseIoError) {
  testing::TempDir dir("bad");
  EXPECT_THROW(read_image(dir / "missing.png"), IoError);
  {
    std::ofstream(dir / "junk.png") << "definitely not a png";
  }
  EXPECT_THROW(read_image(dir / "junk.png"), IoError);
  {
    std::ofstream(dir / "junk.ppm") << "P3\n1 1\n255\n0 0 0\n";
  }
  EXPECT_THROW(read_image(dir / "junk.ppm"), IoError);
}

TEST(ImageIo, TensorConversionClampsIntoUnitRange) {
  Image img = Image::from_tensor(Tensor::from({1, 1, 3}, {-0.5f, 0.5f, 1.5f}));
  EXPECT_EQ(img.pixels, (std::vector<float>{0.0f, 0.5f, 1.0f}));
}

}  // namespace
}  // namespace flowedit
