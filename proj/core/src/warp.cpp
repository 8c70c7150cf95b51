#include "flowedit/warp.hpp"

#include <algorithm>

#include "flowedit/image_ops.hpp"

namespace flowedit {

namespace {

void require_field(std::string_view op, const Tensor& image, const Tensor& field, int channels) {
  if (image.rank() != 3 || field.rank() != 3 || field.dim(0) != image.dim(0) || field.dim(1) != image.dim(1) ||
      field.dim(2) != channels) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(image.shape()) + " vs " +
                     to_string(field.shape()));
  }
}

}  // namespace

Tensor apply_spatial_flow(const Tensor& image, const Tensor& flow) {
  require_field("apply_spatial_flow", image, flow, 2);
  return grid_sample_bilinear(image, add(identity_grid(image.dim(0), image.dim(1)), flow));
}

Tensor apply_color_flow(const Tensor& image, const Tensor& cflow) {
  require_field("apply_color_flow", image, cflow, 1);
  if (image.dim(2) != 3) throw ShapeError("apply_color_flow: expected RGB image, got " + to_string(image.shape()));
  const std::size_t n = static_cast<std::size_t>(image.dim(0)) * image.dim(1);
  auto I = image.data();
  auto D = cflow.data();
  std::vector<float> out(I.size());
  for (std::size_t p = 0; p < n; ++p) {
    const float* rgb = I.data() + 3 * p;
    const float v = std::max({rgb[0], rgb[1], rgb[2]});
    if (v >= kValueEpsilon) {
      const float ratio = std::clamp(v + D[p], 0.0f, 1.0f) / v;
      for (int c = 0; c < 3; ++c) out[3 * p + c] = std::clamp(rgb[c] * ratio, 0.0f, 1.0f);
    } else {
      for (int c = 0; c < 3; ++c) out[3 * p + c] = std::clamp(rgb[c] + D[p], 0.0f, 1.0f);
    }
  }
  return Tensor::make_result("apply_color_flow", image.shape(), std::move(out), {image, cflow},
                             [image, cflow, n](const Tensor& self) {
                               auto g = self.grad();
                               auto I = image.data();
                               auto D = cflow.data();
                               auto gi = image.grad_sink();
                               auto gd = cflow.grad_sink();
                               for (std::size_t p = 0; p < n; ++p) {
                                 const float* rgb = I.data() + 3 * p;
                                 const int k = static_cast<int>(std::max_element(rgb, rgb + 3) - rgb);
                                 const float v = rgb[k];
                                 if (v >= kValueEpsilon) {
                                   const float shifted = v + D[p];
                                   const bool live = shifted >= 0.0f && shifted <= 1.0f;
                                   const float vp = std::clamp(shifted, 0.0f, 1.0f);
                                   // out_c = rgb_c * vp / v
                                   float dv = 0.0f;
                                   for (int c = 0; c < 3; ++c) {
                                     const float go = g[3 * p + c];
                                     if (!gi.empty()) gi[3 * p + c] += go * vp / v;
                                     if (!gd.empty() && live) gd[p] += go * rgb[c] / v;
                                     dv += go * rgb[c] * ((live ? 1.0f : 0.0f) / v - vp / (v * v));
                                   }
                                   if (!gi.empty()) gi[3 * p + k] += dv;
                                 } else {
                                   for (int c = 0; c < 3; ++c) {
                                     const float s = rgb[c] + D[p];
                                     if (s < 0.0f || s > 1.0f) continue;
                                     const float go = g[3 * p + c];
                                     if (!gi.empty()) gi[3 * p + c] += go;
                                     if (!gd.empty()) gd[p] += go;
                                   }
                                 }
                               }
                             });
}

Tensor warp_full(const Tensor& image, const Tensor& flow, const Tensor& cflow) {
  require_field("warp_full", image, flow, 2);
  require_field("warp_full", image, cflow, 1);
  return clamp(apply_color_flow(apply_spatial_flow(image, flow), cflow), 0.0f, 1.0f);
}

Tensor smooth_and_scale(const Tensor& field, int blur_kernel, float alpha) {
  if (blur_kernel < 0 || (blur_kernel > 0 && blur_kernel % 2 == 0)) {
    throw std::invalid_argument("smooth_and_scale: blur kernel must be 0 or odd, got " + std::to_string(blur_kernel));
  }
  if (alpha < 0.0f) throw std::invalid_argument("smooth_and_scale: alpha must be non-negative");
  Tensor blurred = blur_kernel > 0 ? gaussian_blur(field, blur_kernel) : field;
  return alpha == 1.0f ? blurred : scale(blurred, alpha);
}

Image warp_image(const Image& image, const SpatialFlowField& flow, const ColorFlowField& cflow) {
  return Image::from_tensor(warp_full(image.tensor(), flow.tensor(), cflow.tensor()));
}

}  // namespace flowedit
