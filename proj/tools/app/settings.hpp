#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "flowedit/guidance.hpp"
#include "flowedit/optimize.hpp"
#include "json.hpp"

namespace flowedit::app {

/// Resolved settings of an `edit` or `video` run. Layers, lowest first:
/// mode defaults, preset, JSON config file, command-line flags.
struct RunConfig {
  EditConfig edit;
  std::string image;
  std::string prompt;
  std::string out;
  std::string save_flow;
  std::string load_flow;
  std::string trace;
  std::string flow_vis;
  GuidanceKind guidance = GuidanceKind::ToyEmbed;
  std::uint64_t guidance_seed = 0;  // toy-embed projection
  std::string target;               // toy-target reference image
  std::string sidecar_addr;
  int embed_dim = 64;
  std::string preset;
};

/// Merged key/value layer: a JSON object whose keys are the long flag names
/// with '-' replaced by '_'.
using Layer = nlohmann::json;

/// Parses a config file into a layer. Throws IoError when unreadable and
/// ConfigError when not a JSON object.
Layer read_config_file(const std::filesystem::path& path);

/// Overlays `top` onto `base` key by key.
Layer merge(Layer base, const Layer& top);

/// Keys accepted by edit/video configuration layers.
bool is_edit_key(const std::string& key);

/// Builds and validates a RunConfig from merged layers. Throws ConfigError
/// on unknown keys, type mismatches or invalid combinations.
RunConfig resolve_run_config(const Layer& layer);

/// Default EditConfig for a mode (explicit: blur 51, lambda_reg 0; INR:
/// blur 0, lambda_reg 0.1).
EditConfig mode_defaults(FieldMode mode);

/// Sidecar address from the settings or FLOWEDIT_SIDECAR_ADDR.
std::string sidecar_address(const std::string& configured);

/// In-process or remote scorer for a run. Throws ConfigError, IoError or
/// TransportError.
std::unique_ptr<GuidanceScorer> make_scorer(GuidanceKind kind, std::uint64_t seed, int embed_dim,
                                            const std::string& target, const std::string& sidecar_addr);

}  // namespace flowedit::app
