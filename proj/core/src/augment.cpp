#include "flowedit/augment.hpp"

#include <algorithm>
#include <random>

#include "flowedit/image_ops.hpp"

namespace flowedit {

namespace {

Tensor affine_grid(int height, int width, float zoom, float shift_x, float shift_y, bool mirror) {
  const float cx = 0.5f * static_cast<float>(width - 1);
  const float cy = 0.5f * static_cast<float>(height - 1);
  std::vector<float> v(static_cast<std::size_t>(height) * width * 2);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 2;
      const float sx = mirror ? static_cast<float>(width - 1 - x) : static_cast<float>(x);
      v[i] = cx + zoom * (sx - cx) + shift_x;
      v[i + 1] = cy + zoom * (static_cast<float>(y) - cy) + shift_y;
    }
  }
  return Tensor::from({height, width, 2}, std::move(v));
}

}  // namespace

std::vector<std::vector<AugmentOp>> sample_augmentations(const AugmentationPolicy& policy, int n, int height,
                                                         int width) {
  std::mt19937_64 rng(policy.seed ^ 0x6175676d656e74ULL);
  std::uniform_int_distribution<int> pick(0, 2);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  const float m = std::clamp(policy.magnitude, 0.0f, 1.0f);
  std::vector<std::vector<AugmentOp>> chains(n);
  for (auto& chain : chains) {
    for (int k = 0; k < policy.ops_per_sample; ++k) {
      AugmentOp op;
      op.kind = static_cast<AugmentKind>(pick(rng));
      switch (op.kind) {
        case AugmentKind::CropResize: {
          op.zoom = 1.0f - 0.5f * m * unit(rng);
          const float slack_x = 0.5f * (1.0f - op.zoom) * static_cast<float>(width - 1);
          const float slack_y = 0.5f * (1.0f - op.zoom) * static_cast<float>(height - 1);
          op.shift_x = slack_x * (2.0f * unit(rng) - 1.0f);
          op.shift_y = slack_y * (2.0f * unit(rng) - 1.0f);
          break;
        }
        case AugmentKind::Flip:
          op.active = unit(rng) < 0.5f * m;
          break;
        case AugmentKind::Brightness:
          op.factor = 1.0f + 0.4f * m * (2.0f * unit(rng) - 1.0f);
          break;
      }
      chain.push_back(op);
    }
  }
  return chains;
}

Tensor apply_augmentation(const Tensor& image, const AugmentOp& op) {
  const int h = image.dim(0), w = image.dim(1);
  switch (op.kind) {
    case AugmentKind::CropResize:
      if (op.zoom == 1.0f && op.shift_x == 0.0f && op.shift_y == 0.0f) return image;
      return grid_sample_bilinear(image, affine_grid(h, w, op.zoom, op.shift_x, op.shift_y, false));
    case AugmentKind::Flip:
      if (!op.active) return image;
      return grid_sample_bilinear(image, affine_grid(h, w, 1.0f, 0.0f, 0.0f, true));
    case AugmentKind::Brightness:
      if (op.factor == 1.0f) return image;
      return clamp(scale(image, op.factor), 0.0f, 1.0f);
  }
  return image;
}

std::vector<Tensor> augment_batch(const Tensor& image, const AugmentationPolicy& policy, int n) {
  std::vector<Tensor> out;
  out.reserve(n);
  for (const auto& chain : sample_augmentations(policy, n, image.dim(0), image.dim(1))) {
    Tensor x = image;
    for (const AugmentOp& op : chain) x = apply_augmentation(x, op);
    out.push_back(x);
  }
  return out;
}

}  // namespace flowedit
