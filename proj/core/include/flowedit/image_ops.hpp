#pragma once

#include <vector>

#include "flowedit/tensor.hpp"

namespace flowedit {

/// Cross-correlation of a C x H x W input with an O x C x K x K kernel,
/// zero padding. K must be odd and stride 1 or 2.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding);
/// Same, plus a per-output-channel bias of shape [O].
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride, int padding);

/// C x H x W -> C x (H*factor) x (W*factor), each pixel replicated.
Tensor nearest_upsample(const Tensor& input, int factor);

/// Gather-style bilinear sampling.
///
/// `image` is H x W x C, `coords` is H' x W' x 2 holding absolute (x, y)
/// pixel coordinates, pixel centers at integers. Coordinates outside the
/// image are clamped to the border. Differentiable in both arguments.
Tensor grid_sample_bilinear(const Tensor& image, const Tensor& coords);

/// H x W x 2 grid whose (x, y) entry is (x, y).
Tensor identity_grid(int height, int width);

/// Normalized 1-D Gaussian taps. sigma <= 0 selects kernel_size / 6.
std::vector<float> gaussian_kernel(int kernel_size, float sigma = 0.0f);

/// Separable Gaussian blur of an H x W x C field, border-replicate padding.
/// kernel_size must be odd; sigma <= 0 selects kernel_size / 6.
Tensor gaussian_blur(const Tensor& field, int kernel_size, float sigma = 0.0f);

/// Adaptive average pooling of an H x W x C image to out_h x out_w x C.
/// Output cell (i, j) averages rows [floor(i*H/out_h), ceil((i+1)*H/out_h)).
Tensor adaptive_avg_pool(const Tensor& image, int out_h, int out_w);

}  // namespace flowedit
