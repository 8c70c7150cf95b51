#include "flowedit/adam.hpp"

#include <cmath>

#include "flowedit/errors.hpp"

namespace flowedit {

float scheduled_lr(float base_lr, int halve_every, int step) {
  if (halve_every <= 0) return base_lr;
  return base_lr * std::ldexp(1.0f, -(step / halve_every));
}

Adam::Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.lr > 0.0f)) throw ConfigError("adam: learning rate must be positive");
  for (const Tensor& p : params_) {
    if (!p.requires_grad() || !p.is_leaf()) throw ConfigError("adam: parameters must be leaf tensors requiring grad");
    m_.emplace_back(p.size(), 0.0f);
    v_.emplace_back(p.size(), 0.0f);
  }
}

void Adam::step() {
  const float lr = current_lr();
  ++t_;
  const float bc1 = 1.0f - std::pow(config_.beta1, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(config_.beta2, static_cast<float>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto x = p.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0f - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0f - config_.beta2) * g[i] * g[i];
      const float mh = m[i] / bc1;
      const float vh = v[i] / bc2;
      x[i] -= lr * mh / (std::sqrt(vh) + config_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace flowedit
