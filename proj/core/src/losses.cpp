#include "flowedit/losses.hpp"

#include <cmath>
#include <random>

#include "flowedit/errors.hpp"
#include "flowedit/image_ops.hpp"
#include "flowedit/warp.hpp"

namespace flowedit {

void LossWeights::validate() const {
  const std::pair<const char*, float> named[] = {{"clip", clip}, {"sm", sm}, {"reg", reg}, {"color", color}, {"id", id}};
  for (const auto& [name, w] : named) {
    if (!std::isfinite(w) || w < 0.0f) {
      throw ConfigError(std::string("lambda_") + name + " must be a non-negative number, got " + std::to_string(w));
    }
  }
}

Tensor smoothness_loss(const Tensor& field) {
  if (field.rank() != 3 || field.dim(0) < 2 || field.dim(1) < 2) {
    throw ShapeError("smoothness_loss: expected H x W x C with H, W >= 2, got " + to_string(field.shape()));
  }
  const int h = field.dim(0), w = field.dim(1), c = field.dim(2);
  const double count = static_cast<double>(h - 1) * (w - 1);
  auto f = field.data();
  auto idx = [w, c](int y, int x, int k) { return (static_cast<std::size_t>(y) * w + x) * c + k; };
  double acc = 0.0;
  for (int y = 0; y + 1 < h; ++y) {
    for (int x = 0; x + 1 < w; ++x) {
      for (int k = 0; k < c; ++k) {
        const double dx = f[idx(y, x + 1, k)] - f[idx(y, x, k)];
        const double dy = f[idx(y + 1, x, k)] - f[idx(y, x, k)];
        acc += dx * dx + dy * dy;
      }
    }
  }
  const float value = static_cast<float>(acc / count);
  return Tensor::make_result("smoothness", {1}, {value}, {field}, [field, h, w, c, count, idx](const Tensor& self) {
    auto g = field.grad_sink();
    if (g.empty()) return;
    auto f = field.data();
    const float s = static_cast<float>(2.0 * self.grad()[0] / count);
    for (int y = 0; y + 1 < h; ++y) {
      for (int x = 0; x + 1 < w; ++x) {
        for (int k = 0; k < c; ++k) {
          const float dx = f[idx(y, x + 1, k)] - f[idx(y, x, k)];
          const float dy = f[idx(y + 1, x, k)] - f[idx(y, x, k)];
          g[idx(y, x + 1, k)] += s * dx;
          g[idx(y + 1, x, k)] += s * dy;
          g[idx(y, x, k)] -= s * (dx + dy);
        }
      }
    }
  });
}

Tensor reg_loss(const Tensor& field) { return mean(square(field)); }

Tensor color_loss(const Tensor& image, const Tensor& cflow) {
  return mean(square(sub(apply_color_flow(image, cflow), image)));
}

RandomProjectionEmbedder::RandomProjectionEmbedder(std::uint64_t seed, int dim) {
  const int in = kPoolSize * kPoolSize * 3;
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f / std::sqrt(static_cast<float>(in)));
  std::vector<float> p(static_cast<std::size_t>(dim) * in);
  for (float& x : p) x = normal(rng);
  projection_ = Tensor::from({dim, in}, std::move(p));
}

Tensor RandomProjectionEmbedder::embed(const Tensor& image) {
  Tensor pooled = adaptive_avg_pool(image, kPoolSize, kPoolSize);
  return matmul(projection_, reshape(pooled, {kPoolSize * kPoolSize * 3, 1}));
}

Tensor identity_loss(const Tensor& original, const Tensor& edited, IdentityEmbedder& embedder) {
  Tensor reference = embedder.embed(original).detach();
  return add_scalar(neg(cosine_similarity(reference, embedder.embed(edited))), 1.0f);
}

LossTerms total_loss(const Tensor& image, const Tensor& flow, const Tensor& cflow, const LossWeights& weights,
                     const GuidanceContext& guidance) {
  weights.validate();
  LossTerms out;
  out.edited = warp_full(image, flow, cflow);
  std::vector<Tensor> parts;

  if (weights.clip > 0.0f) {
    if (guidance.scorer == nullptr) throw ConfigError("total_loss: lambda_clip > 0 needs a guidance scorer");
    Tensor g;
    if (guidance.augment && guidance.augment_count > 0) {
      auto views = augment_batch(out.edited, guidance.augmentation, guidance.augment_count);
      std::vector<Tensor> scores;
      for (const Tensor& v : views) scores.push_back(guidance_loss(*guidance.scorer, v, guidance.prompt));
      g = mean(concat(scores, 0));
    } else {
      g = guidance_loss(*guidance.scorer, out.edited, guidance.prompt);
    }
    out.clip = g.item();
    parts.push_back(scale(g, weights.clip));
  }
  if (weights.sm > 0.0f) {
    Tensor t = smoothness_loss(flow);
    out.sm = t.item();
    parts.push_back(scale(t, weights.sm));
  }
  if (weights.reg > 0.0f) {
    Tensor t = reg_loss(flow);
    out.reg = t.item();
    parts.push_back(scale(t, weights.reg));
  }
  if (weights.color > 0.0f) {
    Tensor t = color_loss(image, cflow);
    out.color = t.item();
    parts.push_back(scale(t, weights.color));
  }
  if (weights.id > 0.0f) {
    if (guidance.identity == nullptr) throw ConfigError("total_loss: lambda_id > 0 needs an identity embedder");
    Tensor t = identity_loss(image, out.edited, *guidance.identity);
    out.id = t.item();
    parts.push_back(scale(t, weights.id));
  }

  if (parts.empty()) {
    out.total = scale(sum(flow), 0.0f);
  } else {
    out.total = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) out.total = add(out.total, parts[i]);
  }
  return out;
}

}  // namespace flowedit
