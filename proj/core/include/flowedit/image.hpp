#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "flowedit/tensor.hpp"

namespace flowedit {

/// RGB image, H x W x 3 floats in [0, 1], channel-last.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0f);

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  bool empty() const { return pixels.empty(); }

  Tensor tensor(bool requires_grad = false) const;
  // Values are clamped into [0, 1].
  static Image from_tensor(const Tensor& t);

  bool operator==(const Image&) const = default;
};

/// Rasterized per-pixel field with a fixed channel count, H x W x C.
template <int Channels>
struct Field {
  static constexpr int channels = Channels;
  int height = 0;
  int width = 0;
  std::vector<float> values;

  Field() = default;
  Field(int h, int w) : height(h), width(w), values(static_cast<std::size_t>(h) * w * Channels, 0.0f) {}

  float& at(int y, int x, int c) { return values[(static_cast<std::size_t>(y) * width + x) * Channels + c]; }
  float at(int y, int x, int c) const { return values[(static_cast<std::size_t>(y) * width + x) * Channels + c]; }
  std::size_t parameter_count() const { return values.size(); }

  Tensor tensor(bool requires_grad = false) const {
    return Tensor::from({height, width, Channels}, values, requires_grad);
  }
  static Field from_tensor(const Tensor& t) {
    if (t.rank() != 3 || t.dim(2) != Channels) {
      throw ShapeError("field: expected H x W x " + std::to_string(Channels) + ", got " + to_string(t.shape()));
    }
    Field f;
    f.height = t.dim(0);
    f.width = t.dim(1);
    f.values = t.to_vector();
    return f;
  }

  bool operator==(const Field&) const = default;
};

/// U_s: per-pixel (dx, dy) sampling offsets in pixels.
using SpatialFlowField = Field<2>;
/// U_c: per-pixel offset of the HSV value channel.
using ColorFlowField = Field<1>;

// 8-bit RGB. PNG by default, binary PPM (P6) for .ppm/.pnm paths.
// Throws IoError.
Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& image);

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);

inline unsigned char to_u8(float v) {
  const float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return static_cast<unsigned char>(c * 255.0f + 0.5f);
}

}  // namespace flowedit
