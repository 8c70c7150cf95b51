#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "flowedit/adam.hpp"
#include "flowedit/augment.hpp"
#include "flowedit/errors.hpp"
#include "flowedit/guidance.hpp"
#include "flowedit/image.hpp"
#include "flowedit/inr.hpp"
#include "flowedit/losses.hpp"

namespace flowedit {

enum class FieldMode { Explicit, Inr };

FieldMode parse_field_mode(std::string_view name);
std::string_view to_string(FieldMode mode);

/// Settings of one iterative edit. The color field is optimized only when
/// weights.color > 0; otherwise U_c stays zero.
struct EditConfig {
  FieldMode mode = FieldMode::Explicit;
  int iterations = 3000;
  float lr = 1e-2f;
  int halve_every = 1000;
  LossWeights weights{10.0f, 10.0f, 0.0f, 20.0f, 0.1f};
  int blur_kernel = 51;
  float alpha = 1.0f;
  std::uint64_t seed = 0;

  bool augment = true;
  int augment_count = 4;
  AugmentationPolicy augmentation;

  // INR mode: spatial outputs are multiplied by this many pixels; <= 0
  // selects 0.1 * min(H, W).
  float max_displacement = 0.0f;
  InrArchitecture spatial_arch = InrArchitecture::spatial_default();
  InrArchitecture color_arch = InrArchitecture::color_default();

  bool color_enabled() const { return weights.color > 0.0f; }

  // Throws ConfigError. Explicit mode needs an odd blur kernel > 0 and
  // lambda_reg == 0; INR mode needs blur_kernel == 0 and lambda_reg > 0.
  void validate() const;
};

struct TraceRow {
  int step = 0;
  float total = 0.0f;
  float clip = 0.0f;
  float sm = 0.0f;
  float reg = 0.0f;
  float color = 0.0f;
  float id = 0.0f;
  float lr = 0.0f;
};

struct EditResult {
  Image edited;
  SpatialFlowField flow;
  ColorFlowField cflow;
  std::vector<TraceRow> trace;
  int best_step = -1;  // -1 when no step ran
  float best_loss = 0.0f;
  // INR mode only: parameters of the best iterate.
  std::optional<InrField> spatial_inr;
  std::optional<InrField> color_inr;
};

/// Thrown when guidance fails mid-run; carries the steps completed so far.
class EditAborted : public GuidanceError {
 public:
  EditAborted(const std::string& what, std::vector<TraceRow> trace)
      : GuidanceError(what), trace_(std::move(trace)) {}
  const std::vector<TraceRow>& trace() const { return trace_; }

 private:
  std::vector<TraceRow> trace_;
};

/// Gradient descent on zero-initialized rasterized fields.
EditResult run_iterative_explicit(const Image& image, std::string_view prompt, const EditConfig& config,
                                  GuidanceScorer& scorer, IdentityEmbedder* identity = nullptr);

/// Gradient descent on the parameters of f_s and f_c.
EditResult run_iterative_inr(const Image& image, std::string_view prompt, const EditConfig& config,
                             GuidanceScorer& scorer, IdentityEmbedder* identity = nullptr);

/// Dispatches on config.mode.
EditResult run_iterative(const Image& image, std::string_view prompt, const EditConfig& config,
                         GuidanceScorer& scorer, IdentityEmbedder* identity = nullptr);

/// Header "step,total,clip,sm,reg,color,id,lr", one row per step.
void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace);

}  // namespace flowedit
