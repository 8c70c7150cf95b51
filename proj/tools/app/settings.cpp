#include "settings.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "flowedit/errors.hpp"
#include "flowedit/sidecar.hpp"
#include "presets.hpp"

namespace flowedit::app {

namespace {

const std::set<std::string>& edit_keys() {
  static const std::set<std::string> keys = {
      "image",        "prompt",         "mode",          "iters",         "lr",           "halve_every",
      "lambda_clip",  "lambda_sm",      "lambda_reg",    "lambda_color",  "lambda_id",    "blur_kernel",
      "alpha",        "guidance",       "target",        "sidecar_addr",  "seed",         "out",
      "save_flow",    "load_flow",      "trace",         "preset",        "flow_vis",     "augment",
      "augment_count", "augment_magnitude", "max_displacement", "embed_dim", "guidance_seed"};
  return keys;
}

template <typename T>
T get(const Layer& layer, const char* key, T fallback) {
  if (!layer.contains(key) || layer[key].is_null()) return fallback;
  try {
    return layer[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type: " + layer[key].dump());
  }
}

}  // namespace

Layer read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  Layer j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "': " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file '" + path.string() + "' must hold a JSON object");
  return j;
}

Layer merge(Layer base, const Layer& top) {
  if (base.is_null()) base = Layer::object();
  for (auto it = top.begin(); it != top.end(); ++it) base[it.key()] = it.value();
  return base;
}

bool is_edit_key(const std::string& key) { return edit_keys().count(key) != 0; }

EditConfig mode_defaults(FieldMode mode) {
  EditConfig c;
  c.mode = mode;
  if (mode == FieldMode::Inr) {
    c.blur_kernel = 0;
    c.weights.reg = 0.1f;
  } else {
    c.blur_kernel = 51;
    c.weights.reg = 0.0f;
  }
  return c;
}

RunConfig resolve_run_config(const Layer& layer) {
  for (auto it = layer.begin(); it != layer.end(); ++it) {
    if (!is_edit_key(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
  }
  RunConfig rc;
  rc.edit = mode_defaults(parse_field_mode(get<std::string>(layer, "mode", "explicit")));
  EditConfig& e = rc.edit;

  rc.preset = get<std::string>(layer, "preset", "");
  if (!rc.preset.empty()) {
    const Preset& p = find_preset(rc.preset);
    const auto& col = e.mode == FieldMode::Explicit ? p.explicit_mode : p.inr_mode;
    if (!col) {
      throw ConfigError("preset '" + p.name + "' has no " + std::string(to_string(e.mode)) + "-mode settings");
    }
    e.weights = col->weights;
    e.blur_kernel = col->blur_kernel;
    rc.prompt = p.prompt;
  }

  e.iterations = get<int>(layer, "iters", e.iterations);
  e.lr = get<float>(layer, "lr", e.lr);
  e.halve_every = get<int>(layer, "halve_every", e.halve_every);
  e.weights.clip = get<float>(layer, "lambda_clip", e.weights.clip);
  e.weights.sm = get<float>(layer, "lambda_sm", e.weights.sm);
  e.weights.reg = get<float>(layer, "lambda_reg", e.weights.reg);
  e.weights.color = get<float>(layer, "lambda_color", e.weights.color);
  e.weights.id = get<float>(layer, "lambda_id", e.weights.id);
  e.blur_kernel = get<int>(layer, "blur_kernel", e.blur_kernel);
  e.alpha = get<float>(layer, "alpha", e.alpha);
  e.seed = get<std::uint64_t>(layer, "seed", e.seed);
  e.augment = get<bool>(layer, "augment", e.augment);
  e.augment_count = get<int>(layer, "augment_count", e.augment_count);
  e.augmentation.magnitude = get<float>(layer, "augment_magnitude", e.augmentation.magnitude);
  e.augmentation.seed = e.seed;
  e.max_displacement = get<float>(layer, "max_displacement", e.max_displacement);

  rc.image = get<std::string>(layer, "image", "");
  rc.prompt = get<std::string>(layer, "prompt", rc.prompt);
  rc.out = get<std::string>(layer, "out", "");
  rc.save_flow = get<std::string>(layer, "save_flow", "");
  rc.load_flow = get<std::string>(layer, "load_flow", "");
  rc.trace = get<std::string>(layer, "trace", "");
  rc.flow_vis = get<std::string>(layer, "flow_vis", "");
  rc.guidance = parse_guidance_kind(get<std::string>(layer, "guidance", "toy-embed"));
  if (rc.guidance == GuidanceKind::ToyTarget && !layer.contains("augment")) e.augment = false;
  rc.guidance_seed = get<std::uint64_t>(layer, "guidance_seed", rc.guidance_seed);
  rc.target = get<std::string>(layer, "target", "");
  rc.sidecar_addr = get<std::string>(layer, "sidecar_addr", "");
  rc.embed_dim = get<int>(layer, "embed_dim", rc.embed_dim);
  if (rc.embed_dim <= 0) throw ConfigError("embed_dim must be positive");

  e.validate();
  if (rc.load_flow.empty()) {
    if (rc.prompt.empty() && e.weights.clip > 0.0f) throw ConfigError("a prompt is required (--prompt or --preset)");
    if (rc.guidance == GuidanceKind::ToyTarget && rc.target.empty() && e.weights.clip > 0.0f) {
      throw ConfigError("toy-target guidance needs --target");
    }
  }
  return rc;
}

std::string sidecar_address(const std::string& configured) {
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv("FLOWEDIT_SIDECAR_ADDR"); env != nullptr && *env != '\0') return env;
  throw ConfigError("sidecar guidance needs --sidecar-addr or FLOWEDIT_SIDECAR_ADDR");
}

std::unique_ptr<GuidanceScorer> make_scorer(GuidanceKind kind, std::uint64_t seed, int embed_dim,
                                            const std::string& target, const std::string& sidecar_addr) {
  switch (kind) {
    case GuidanceKind::ToyTarget:
      if (target.empty()) throw ConfigError("toy-target guidance needs --target");
      return std::make_unique<ToyTargetScorer>(read_image(target), embed_dim);
    case GuidanceKind::ToyEmbed:
      return std::make_unique<ToyEmbedScorer>(seed, embed_dim);
    case GuidanceKind::Sidecar:
      return std::make_unique<SidecarScorer>(open_sidecar(sidecar_address(sidecar_addr)));
  }
  throw ConfigError("unknown guidance kind");
}

}  // namespace flowedit::app
