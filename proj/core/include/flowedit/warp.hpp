#pragma once

#include <filesystem>

#include "flowedit/image.hpp"
#include "flowedit/tensor.hpp"

namespace flowedit {

/// Value offsets below this brightness are applied additively instead of by
/// rescaling, where V' / V is ill-conditioned.
inline constexpr float kValueEpsilon = 1e-4f;

/// Backward warp: out(x, y) = bilinear(image, (x + dx(x, y), y + dy(x, y))).
/// image H x W x C, flow H x W x 2.
Tensor apply_spatial_flow(const Tensor& image, const Tensor& flow);

/// Shifts the HSV value channel by `cflow` (H x W x 1) while keeping hue and
/// saturation: rgb * clamp(V + dc, 0, 1) / V with V = max(r, g, b). Pixels
/// with V < kValueEpsilon receive dc on every channel. Output clamped to [0, 1].
Tensor apply_color_flow(const Tensor& image, const Tensor& cflow);

/// Full edit transform: spatial warp, then value shift, then clamp to [0, 1].
Tensor warp_full(const Tensor& image, const Tensor& flow, const Tensor& cflow);

/// alpha * GaussianBlur(field); blur_kernel == 0 disables the blur.
Tensor smooth_and_scale(const Tensor& field, int blur_kernel, float alpha);

// Convenience wrappers on concrete values (no gradient).
Image warp_image(const Image& image, const SpatialFlowField& flow, const ColorFlowField& cflow);

/// Generic rasterized field for the VFF1 flow file format.
struct RasterField {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> values;
  bool operator==(const RasterField&) const = default;
};

// "VFF1", u32 H, u32 W, u32 C (little-endian), then H*W*C little-endian
// float32 values, row-major, channel-last. Throws IoError.
void write_vff(const std::filesystem::path& path, const RasterField& field);
RasterField read_vff(const std::filesystem::path& path);

// Packs U_s and U_c into a 3-channel field (dx, dy, dc) and back. A
// 2-channel file unpacks to a zero color field.
RasterField pack_flow(const SpatialFlowField& flow, const ColorFlowField& cflow);
void unpack_flow(const RasterField& field, SpatialFlowField& flow, ColorFlowField& cflow);

/// Optical-flow color wheel rendering: direction to hue, magnitude to
/// saturation, normalized by `max_magnitude` (<= 0: the field's maximum).
Image visualize_flow(const SpatialFlowField& flow, float max_magnitude = 0.0f);

}  // namespace flowedit
