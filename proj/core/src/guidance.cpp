#include "flowedit/guidance.hpp"

#include <cmath>
#include <random>

#include "flowedit/errors.hpp"
#include "flowedit/image_ops.hpp"

namespace flowedit {

namespace {

void require_prompt(std::string_view prompt) {
  if (prompt.empty()) throw GuidanceError("guidance: empty prompt");
}

}  // namespace

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<float> hashed_prompt_embedding(std::string_view prompt, std::uint64_t seed, int dim) {
  std::mt19937_64 rng(fnv1a(prompt) ^ (seed * 0x9e3779b97f4a7c15ULL));
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<float> v(dim);
  double norm = 0.0;
  for (float& x : v) {
    x = normal(rng);
    norm += static_cast<double>(x) * x;
  }
  norm = std::sqrt(std::max(norm, 1e-24));
  for (float& x : v) x = static_cast<float>(x / norm);
  return v;
}

ToyTargetScorer::ToyTargetScorer(Image target, int embed_dim) : target_(std::move(target)), embed_dim_(embed_dim) {
  if (target_.empty()) throw GuidanceError("toy-target: empty target image");
}

ScoreResult ToyTargetScorer::score_with_gradient(const Image& image, std::string_view prompt) {
  require_prompt(prompt);
  if (image.height != target_.height || image.width != target_.width) {
    throw GuidanceError("toy-target: image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                        " does not match target " + std::to_string(target_.height) + "x" +
                        std::to_string(target_.width));
  }
  const std::size_t n = image.pixels.size();
  ScoreResult r;
  r.grad.resize(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const float d = image.pixels[i] - target_.pixels[i];
    acc += static_cast<double>(d) * d;
    r.grad[i] = 2.0f * d / static_cast<float>(n);
  }
  r.loss = static_cast<float>(acc / static_cast<double>(n));
  return r;
}

std::vector<float> ToyTargetScorer::text_embedding(std::string_view prompt) {
  require_prompt(prompt);
  return hashed_prompt_embedding(prompt, 0, embed_dim_);
}

ToyEmbedScorer::ToyEmbedScorer(std::uint64_t seed, int embed_dim) : seed_(seed), embed_dim_(embed_dim) {
  if (embed_dim <= 0) throw GuidanceError("toy-embed: embedding dimension must be positive");
  const int in = kPoolSize * kPoolSize * 3;
  std::mt19937_64 rng(seed ^ 0x70795f656d626564ULL);
  std::normal_distribution<float> normal(0.0f, 1.0f / std::sqrt(static_cast<float>(in)));
  std::vector<float> p(static_cast<std::size_t>(embed_dim) * in);
  for (float& x : p) x = normal(rng);
  projection_ = Tensor::from({embed_dim, in}, std::move(p));
}

Tensor ToyEmbedScorer::embed_image(const Tensor& image) const {
  Tensor pooled = adaptive_avg_pool(image, kPoolSize, kPoolSize);
  return matmul(projection_, reshape(pooled, {kPoolSize * kPoolSize * 3, 1}));
}

ScoreResult ToyEmbedScorer::score_with_gradient(const Image& image, std::string_view prompt) {
  require_prompt(prompt);
  Tensor x = image.tensor(true);
  Tensor e = Tensor::from({embed_dim_, 1}, hashed_prompt_embedding(prompt, seed_, embed_dim_));
  Tensor loss = neg(cosine_similarity(embed_image(x), e));
  backward(loss);
  return {loss.item(), std::vector<float>(x.grad().begin(), x.grad().end())};
}

std::vector<float> ToyEmbedScorer::text_embedding(std::string_view prompt) {
  require_prompt(prompt);
  return hashed_prompt_embedding(prompt, seed_, embed_dim_);
}

Tensor guidance_loss(GuidanceScorer& scorer, const Tensor& image, std::string_view prompt) {
  ScoreResult r = scorer.score_with_gradient(Image::from_tensor(image), prompt);
  if (r.grad.size() != image.size()) {
    throw GuidanceError("guidance: gradient has " + std::to_string(r.grad.size()) + " values for image " +
                        to_string(image.shape()));
  }
  auto grad = std::make_shared<std::vector<float>>(std::move(r.grad));
  return Tensor::make_result("guidance", {1}, {r.loss}, {image}, [image, grad](const Tensor& self) {
    const float g = self.grad()[0];
    auto gi = image.grad_sink();
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g * (*grad)[i];
  });
}

GuidanceKind parse_guidance_kind(std::string_view name) {
  if (name == "toy-target") return GuidanceKind::ToyTarget;
  if (name == "toy-embed") return GuidanceKind::ToyEmbed;
  if (name == "sidecar") return GuidanceKind::Sidecar;
  throw ConfigError("unknown guidance '" + std::string(name) + "' (expected toy-target, toy-embed or sidecar)");
}

std::string_view to_string(GuidanceKind kind) {
  switch (kind) {
    case GuidanceKind::ToyTarget:
      return "toy-target";
    case GuidanceKind::ToyEmbed:
      return "toy-embed";
    case GuidanceKind::Sidecar:
      return "sidecar";
  }
  return "unknown";
}

}  // namespace flowedit
