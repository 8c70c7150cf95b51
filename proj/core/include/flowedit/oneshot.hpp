#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "flowedit/augment.hpp"
#include "flowedit/guidance.hpp"
#include "flowedit/image.hpp"
#include "flowedit/inr.hpp"
#include "flowedit/losses.hpp"
#include "flowedit/tensor.hpp"

namespace flowedit {

/// Architecture of the one-shot predictor.
struct OneShotArch {
  std::vector<int> widths{16, 32, 32, 64};  // full resolution, then after each stride-2 level
  int blocks_per_level = 2;
  int heads = 2;
  int head_width = 32;
  int text_dim = 64;
  std::vector<int> hyper_hidden{256, 256};
  InrArchitecture color_arch = InrArchitecture::color_default();
  float flow_scale = 4.0f;  // pixels per unit of flow-head output

  int attention_dim() const { return heads * head_width; }
  int levels() const { return static_cast<int>(widths.size()) - 1; }
  // Throws ConfigError.
  void validate() const;

  // Widths scaled from (64, 128, 128, 256); factor 0.25 gives (16, 32, 32, 64).
  static OneShotArch scaled(float width_factor);

  bool operator==(const OneShotArch&) const = default;
};

/// Multi-head cross-attention of N feature tokens [N, C] over M text tokens
/// [M, E]: X + concat_h(softmax(Q_h K_h^T / sqrt(head_width)) V_h) W_o with
/// Q = X W_q, K = T W_k, V = T W_v. `weights_out`, if given, receives the
/// per-head attention matrices [N, M].
Tensor cross_attention(const Tensor& features, const Tensor& text, const Tensor& w_q, const Tensor& w_k,
                       const Tensor& w_v, const Tensor& w_o, int heads, std::vector<Tensor>* weights_out = nullptr);

struct OneShotOutput {
  Tensor flow;      // H x W x 2, before blur
  Tensor theta_c;   // [color_arch.parameter_count()]
  Tensor cflow;     // H x W x 1
  std::vector<Tensor> attention;  // per head, [tokens, text tokens]
};

/// Encoder / bottleneck cross-attention / decoder with skips for U_s, plus a
/// hypernetwork predicting the parameters of f_c from pooled bottleneck tokens.
class OneShotNet {
 public:
  struct Parameter {
    std::string name;
    Tensor value;
  };

  explicit OneShotNet(OneShotArch arch = {}, std::uint64_t seed = 0);

  const OneShotArch& arch() const { return arch_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Tensor> parameter_tensors() const;
  std::size_t parameter_count() const;
  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;

  // image: H x W x 3, H and W divisible by 2^levels. text: [M, text_dim].
  OneShotOutput forward(const Tensor& image, const Tensor& text) const;

 private:
  Tensor& add(std::string name, Shape shape, std::vector<float> values);
  Tensor conv(const Tensor& x, const std::string& name, int stride) const;
  Tensor res_block(const Tensor& x, const std::string& name) const;

  OneShotArch arch_;
  std::vector<Parameter> params_;
};

/// Text tokens [1, dim] from a single embedding vector.
Tensor text_tokens(const std::vector<float>& embedding);

struct OneShotTrainConfig {
  int epochs = 100;
  int max_steps = -1;  // stop early after this many steps when >= 0
  float lr = 1e-4f;
  int halve_every_epochs = 10;
  LossWeights weights{10.0f, 10.0f, 0.0f, 10.0f, 0.1f};
  int blur_kernel = 51;
  float alpha = 1.0f;
  std::uint64_t seed = 0;
  bool augment = true;
  int augment_count = 4;
  AugmentationPolicy augmentation;

  void validate() const;
};

struct OneShotTraceRow {
  int epoch = 0;
  int step = 0;
  float total = 0.0f;
  float lr = 0.0f;
};

/// Unsupervised training on (image, random prompt) pairs, one pair per step.
std::vector<OneShotTraceRow> train_oneshot(OneShotNet& net, const std::vector<Image>& dataset,
                                           const std::vector<std::string>& prompts, GuidanceScorer& scorer,
                                           const OneShotTrainConfig& config, IdentityEmbedder* identity = nullptr,
                                           const std::function<void(const OneShotTraceRow&)>& on_step = {});

struct OneShotEdit {
  Image edited;
  SpatialFlowField flow;  // after blur and alpha
  ColorFlowField cflow;
  std::vector<float> theta_c;
};

/// Single forward pass edit: U_s blurred with `blur_kernel` and both fields scaled by alpha.
OneShotEdit oneshot_edit(const OneShotNet& net, const Image& image, const std::vector<float>& text_embedding,
                         int blur_kernel = 51, float alpha = 1.0f);

// "OSN1", architecture header, u64 parameter count, little-endian float32
// parameters in declaration order. Throws IoError on unreadable or
// truncated files and ConfigError on an invalid architecture header.
void save_oneshot(const std::filesystem::path& path, const OneShotNet& net);
OneShotNet load_oneshot(const std::filesystem::path& path);

/// Images in `dir` (PNG/PPM, sorted by name) and a newline-separated prompt
/// list; blank lines skipped. Throws IoError.
std::vector<Image> load_image_dir(const std::filesystem::path& dir);
std::vector<std::string> load_prompts(const std::filesystem::path& path);

}  // namespace flowedit
