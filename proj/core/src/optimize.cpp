#include "flowedit/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>

#include "flowedit/warp.hpp"

namespace flowedit {

FieldMode parse_field_mode(std::string_view name) {
  if (name == "explicit") return FieldMode::Explicit;
  if (name == "inr") return FieldMode::Inr;
  throw ConfigError("unknown mode '" + std::string(name) + "' (expected explicit or inr)");
}

std::string_view to_string(FieldMode mode) { return mode == FieldMode::Explicit ? "explicit" : "inr"; }

void EditConfig::validate() const {
  weights.validate();
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (!(lr > 0.0f) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (!(alpha >= 0.0f) || !std::isfinite(alpha)) throw ConfigError("alpha must be >= 0");
  if (augment && augment_count < 1) throw ConfigError("augment count must be >= 1");
  if (augmentation.magnitude < 0.0f || augmentation.magnitude > 1.0f) {
    throw ConfigError("augmentation magnitude must be in [0, 1]");
  }
  if (mode == FieldMode::Explicit) {
    if (blur_kernel <= 0 || blur_kernel % 2 == 0) {
      throw ConfigError("explicit mode needs an odd blur kernel > 0, got " + std::to_string(blur_kernel));
    }
    if (weights.reg != 0.0f) throw ConfigError("explicit mode needs lambda_reg = 0");
  } else {
    if (blur_kernel != 0) throw ConfigError("INR mode needs blur kernel 0, got " + std::to_string(blur_kernel));
    if (!(weights.reg > 0.0f)) throw ConfigError("INR mode needs lambda_reg > 0");
    spatial_arch.validate();
    color_arch.validate();
    if (spatial_arch.output_channels() != 2) throw ConfigError("spatial INR must have 2 outputs");
    if (color_arch.output_channels() != 1) throw ConfigError("color INR must have 1 output");
  }
}

namespace {

struct Fields {
  Tensor flow;
  Tensor cflow;
};

// Shared loop: `make_fields` builds the current (differentiable) fields from
// the parameters, `snapshot` records the parameters of a new best iterate.
EditResult optimize_fields(const Image& image, std::string_view prompt, const EditConfig& config,
                           GuidanceScorer& scorer, IdentityEmbedder* identity, std::vector<Tensor> params,
                           const std::function<Fields()>& make_fields, const std::function<void()>& snapshot) {
  const int h = image.height, w = image.width;
  RandomProjectionEmbedder default_identity;
  GuidanceContext ctx;
  ctx.scorer = &scorer;
  ctx.prompt = prompt;
  ctx.identity = identity != nullptr ? identity : &default_identity;
  ctx.augment = config.augment;
  ctx.augment_count = config.augment_count;
  ctx.augmentation = config.augmentation;

  const Tensor input = image.tensor();
  Adam adam(std::move(params), AdamConfig{config.lr, 0.9f, 0.999f, 1e-8f, config.halve_every});

  EditResult result;
  result.flow = SpatialFlowField(h, w);
  result.cflow = ColorFlowField(h, w);
  result.best_loss = std::numeric_limits<float>::infinity();

  for (int step = 0; step < config.iterations; ++step) {
    ctx.augmentation.seed = config.augmentation.seed ^ (config.seed * 0x9e3779b97f4a7c15ULL) ^
                            (static_cast<std::uint64_t>(step) * 0xbf58476d1ce4e5b9ULL);
    adam.zero_grad();
    Fields f = make_fields();
    LossTerms terms;
    try {
      terms = total_loss(input, f.flow, f.cflow, config.weights, ctx);
    } catch (const GuidanceError& e) {
      throw EditAborted(std::string("edit aborted at step ") + std::to_string(step) + ": " + e.what(),
                        std::move(result.trace));
    }
    const float total = terms.total.item();
    result.trace.push_back({step, total, terms.clip, terms.sm, terms.reg, terms.color, terms.id, adam.current_lr()});
    if (total < result.best_loss) {
      result.best_loss = total;
      result.best_step = step;
      result.flow = SpatialFlowField::from_tensor(f.flow);
      result.cflow = ColorFlowField::from_tensor(f.cflow);
      snapshot();
    }
    backward(terms.total);
    adam.step();
  }
  if (result.best_step < 0) result.best_loss = 0.0f;
  result.edited = warp_image(image, result.flow, result.cflow);
  return result;
}

void require_mode(const EditConfig& config, FieldMode mode) {
  config.validate();
  if (config.mode != mode) {
    throw ConfigError("configuration is for " + std::string(to_string(config.mode)) + " mode, not " +
                      std::string(to_string(mode)));
  }
}

}  // namespace

EditResult run_iterative_explicit(const Image& image, std::string_view prompt, const EditConfig& config,
                                  GuidanceScorer& scorer, IdentityEmbedder* identity) {
  require_mode(config, FieldMode::Explicit);
  const int h = image.height, w = image.width;
  Tensor raw_flow = Tensor::zeros({h, w, 2}, true);
  Tensor raw_cflow = Tensor::zeros({h, w, 1}, config.color_enabled());
  std::vector<Tensor> params{raw_flow};
  if (config.color_enabled()) params.push_back(raw_cflow);

  auto make_fields = [&]() -> Fields {
    return {smooth_and_scale(raw_flow, config.blur_kernel, config.alpha),
            config.color_enabled() ? smooth_and_scale(raw_cflow, config.blur_kernel, config.alpha) : raw_cflow};
  };
  return optimize_fields(image, prompt, config, scorer, identity, std::move(params), make_fields, [] {});
}

EditResult run_iterative_inr(const Image& image, std::string_view prompt, const EditConfig& config,
                             GuidanceScorer& scorer, IdentityEmbedder* identity) {
  require_mode(config, FieldMode::Inr);
  const int h = image.height, w = image.width;
  const float d = config.max_displacement > 0.0f ? config.max_displacement : 0.1f * static_cast<float>(std::min(h, w));
  InrField fs = init_params(config.spatial_arch, config.seed);
  InrField fc = init_params(config.color_arch, config.seed + 1);
  const Tensor grid = normalized_grid(h, w);
  const Tensor enc_s = encode_grid(grid, fs.arch.encoding_levels);
  const Tensor enc_c = fc.arch.encoding_levels == fs.arch.encoding_levels ? enc_s : encode_grid(grid, fc.arch.encoding_levels);
  const Tensor zero_c = Tensor::zeros({h, w, 1});

  std::vector<Tensor> params{fs.params};
  if (config.color_enabled()) params.push_back(fc.params);

  auto make_fields = [&]() -> Fields {
    Tensor flow = smooth_and_scale(inr_forward_encoded(fs.arch, fs.params, enc_s, h, w, d), 0, config.alpha);
    Tensor cflow = config.color_enabled()
                       ? smooth_and_scale(inr_forward_encoded(fc.arch, fc.params, enc_c, h, w), 0, config.alpha)
                       : zero_c;
    return {flow, cflow};
  };
  std::vector<float> best_s = fs.params.to_vector(), best_c = fc.params.to_vector();
  auto snapshot = [&] {
    best_s = fs.params.to_vector();
    best_c = fc.params.to_vector();
  };
  EditResult r = optimize_fields(image, prompt, config, scorer, identity, std::move(params), make_fields, snapshot);
  r.spatial_inr = unflatten_params(fs.arch, best_s);
  r.color_inr = unflatten_params(fc.arch, best_c);
  return r;
}

EditResult run_iterative(const Image& image, std::string_view prompt, const EditConfig& config,
                         GuidanceScorer& scorer, IdentityEmbedder* identity) {
  return config.mode == FieldMode::Explicit ? run_iterative_explicit(image, prompt, config, scorer, identity)
                                            : run_iterative_inr(image, prompt, config, scorer, identity);
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "step,total,clip,sm,reg,color,id,lr\n";
  out.precision(9);
  for (const TraceRow& r : trace) {
    out << r.step << ',' << r.total << ',' << r.clip << ',' << r.sm << ',' << r.reg << ',' << r.color << ','
        << r.id << ',' << r.lr << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace flowedit
