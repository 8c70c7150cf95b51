#pragma once

#include <cstdint>
#include <string_view>

#include "flowedit/augment.hpp"
#include "flowedit/guidance.hpp"
#include "flowedit/tensor.hpp"

namespace flowedit {

/// Weights of the combined editing objective.
struct LossWeights {
  float clip = 10.0f;
  float sm = 10.0f;
  float reg = 0.1f;
  float color = 20.0f;
  float id = 0.1f;

  // Throws ConfigError on a negative or non-finite weight.
  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

/// Mean over positions with a right and a lower neighbour of
/// sum_c (dx^2 + dy^2), with forward differences. Needs H, W >= 2.
Tensor smoothness_loss(const Tensor& field);

/// Mean of squared components.
Tensor reg_loss(const Tensor& field);

/// mean((apply_color_flow(image, cflow) - image)^2).
Tensor color_loss(const Tensor& image, const Tensor& cflow);

/// Differentiable face-identity embedding.
class IdentityEmbedder {
 public:
  virtual ~IdentityEmbedder() = default;
  virtual Tensor embed(const Tensor& image) = 0;
};

/// Fixed seeded projection of a 16 x 16 pooled image to `dim` values.
class RandomProjectionEmbedder final : public IdentityEmbedder {
 public:
  static constexpr int kPoolSize = 16;
  static constexpr std::uint64_t kDefaultSeed = 0x1d;

  explicit RandomProjectionEmbedder(std::uint64_t seed = kDefaultSeed, int dim = 256);
  Tensor embed(const Tensor& image) override;

 private:
  Tensor projection_;
};

/// 1 - cos(embed(original), embed(edited)); the original side is constant.
Tensor identity_loss(const Tensor& original, const Tensor& edited, IdentityEmbedder& embedder);

/// Guidance inputs for one objective evaluation.
struct GuidanceContext {
  GuidanceScorer* scorer = nullptr;
  std::string_view prompt;
  IdentityEmbedder* identity = nullptr;  // required when weights.id > 0
  bool augment = false;
  AugmentationPolicy augmentation;
  int augment_count = 4;
};

struct LossTerms {
  Tensor total;
  Tensor edited;
  float clip = 0.0f;
  float sm = 0.0f;
  float reg = 0.0f;
  float color = 0.0f;
  float id = 0.0f;
};

/// Warps `image` by (flow, cflow) and evaluates
/// clip * L_guide + sm * L_sm(flow) + reg * L_reg(flow) + color * L_color + id * L_id.
/// Terms with zero weight are skipped; their recorded value is 0.
LossTerms total_loss(const Tensor& image, const Tensor& flow, const Tensor& cflow, const LossWeights& weights,
                     const GuidanceContext& guidance);

}  // namespace flowedit
