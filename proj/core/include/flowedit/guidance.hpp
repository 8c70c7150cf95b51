#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "flowedit/image.hpp"
#include "flowedit/tensor.hpp"

namespace flowedit {

/// Loss (lower is better) and its gradient with respect to every pixel
/// value, H x W x 3 channel-last.
struct ScoreResult {
  float loss = 0.0f;
  std::vector<float> grad;
};

/// Stand-in for -s(E(image), E(prompt)): anything that can score an image
/// against a prompt and return the input gradient.
class GuidanceScorer {
 public:
  virtual ~GuidanceScorer() = default;

  virtual std::string_view kind() const = 0;

  // Deterministic in (image, prompt). Throws GuidanceError on failure or an
  // empty prompt.
  virtual ScoreResult score_with_gradient(const Image& image, std::string_view prompt) = 0;

  // Prompt embedding usable as the one-shot network's text token.
  virtual std::vector<float> text_embedding(std::string_view prompt) = 0;
};

/// Mean squared difference to a fixed target image; the prompt is ignored.
class ToyTargetScorer final : public GuidanceScorer {
 public:
  explicit ToyTargetScorer(Image target, int embed_dim = 64);

  std::string_view kind() const override { return "toy-target"; }
  ScoreResult score_with_gradient(const Image& image, std::string_view prompt) override;
  std::vector<float> text_embedding(std::string_view prompt) override;

  const Image& target() const { return target_; }

 private:
  Image target_;
  int embed_dim_;
};

/// -cos(normalize(P * flatten(pool16(image))), e(prompt)) with a seeded
/// Gaussian projection P and a hash-seeded unit prompt vector e.
class ToyEmbedScorer final : public GuidanceScorer {
 public:
  static constexpr int kPoolSize = 16;

  explicit ToyEmbedScorer(std::uint64_t seed = 0, int embed_dim = 64);

  std::string_view kind() const override { return "toy-embed"; }
  ScoreResult score_with_gradient(const Image& image, std::string_view prompt) override;
  std::vector<float> text_embedding(std::string_view prompt) override;

  int embed_dim() const { return embed_dim_; }
  // Differentiable image embedding (unnormalized), shape [embed_dim, 1].
  Tensor embed_image(const Tensor& image) const;

 private:
  std::uint64_t seed_;
  int embed_dim_;
  Tensor projection_;  // [embed_dim, kPoolSize * kPoolSize * 3]
};

/// 64-bit FNV-1a; stable across platforms, used to seed per-prompt vectors.
std::uint64_t fnv1a(std::string_view text);

/// Unit-norm Gaussian vector seeded by (seed, prompt).
std::vector<float> hashed_prompt_embedding(std::string_view prompt, std::uint64_t seed, int dim);

/// Scalar graph node whose value is scorer(image, prompt).loss and whose
/// backward multiplies the returned pixel gradient into `image`.
Tensor guidance_loss(GuidanceScorer& scorer, const Tensor& image, std::string_view prompt);

enum class GuidanceKind { ToyTarget, ToyEmbed, Sidecar };

GuidanceKind parse_guidance_kind(std::string_view name);
std::string_view to_string(GuidanceKind kind);

}  // namespace flowedit
