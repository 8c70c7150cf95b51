#pragma once

#include <cstdint>
#include <vector>

#include "flowedit/tensor.hpp"

namespace flowedit {

/// Random augmentation applied to the edited image before scoring:
/// `ops_per_sample` ops drawn from {crop-resize, horizontal flip, brightness},
/// strengths scaled linearly by `magnitude` in [0, 1]. Magnitude 0 yields
/// unmodified copies.
struct AugmentationPolicy {
  int ops_per_sample = 2;
  float magnitude = 0.5f;
  std::uint64_t seed = 0;
};

enum class AugmentKind { CropResize, Flip, Brightness };

struct AugmentOp {
  AugmentKind kind = AugmentKind::Flip;
  // CropResize: zoom factor in (0, 1] and center shift in pixels.
  float zoom = 1.0f;
  float shift_x = 0.0f;
  float shift_y = 0.0f;
  // Flip: whether it fires.
  bool active = false;
  // Brightness: multiplicative factor.
  float factor = 1.0f;
};

/// Draws `n` augmentation chains, deterministic in (policy, image size).
std::vector<std::vector<AugmentOp>> sample_augmentations(const AugmentationPolicy& policy, int n, int height,
                                                         int width);

/// Applies one op to an H x W x 3 image inside the graph.
Tensor apply_augmentation(const Tensor& image, const AugmentOp& op);

/// n differentiable augmented copies of `image`.
std::vector<Tensor> augment_batch(const Tensor& image, const AugmentationPolicy& policy, int n);

}  // namespace flowedit
