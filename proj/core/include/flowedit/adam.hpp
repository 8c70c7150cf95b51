#pragma once

#include <vector>

#include "flowedit/tensor.hpp"

namespace flowedit {

struct AdamConfig {
  float lr = 1e-2f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  int halve_every = 1000;  // <= 0 keeps lr constant
};

/// lr * 0.5^floor(step / halve_every), `step` counting completed updates.
float scheduled_lr(float base_lr, int halve_every, int step);

/// Bias-corrected Adam with step decay over a fixed set of leaf tensors.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  // Applies one update from the parameters' accumulated gradients.
  void step();
  void zero_grad();

  // Learning rate used by the next step().
  float current_lr() const { return scheduled_lr(config_.lr, config_.halve_every, t_); }
  int step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<float>> m_, v_;
  int t_ = 0;
};

}  // namespace flowedit
