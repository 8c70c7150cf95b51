#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flowedit/losses.hpp"

namespace flowedit::app {

/// Loss weights and blur kernel of one experiment row.
struct PresetColumn {
  LossWeights weights;
  int blur_kernel = 0;
};

/// Named per-prompt settings. `explicit_mode`/`inr_mode` hold the rows for
/// the two iterative representations; `oneshot` the one-shot row.
struct Preset {
  std::string name;
  std::string prompt;
  std::optional<PresetColumn> explicit_mode;
  std::optional<PresetColumn> inr_mode;
  std::optional<PresetColumn> oneshot;
};

const std::vector<Preset>& presets();
// Throws ConfigError for unknown names.
const Preset& find_preset(std::string_view name);

}  // namespace flowedit::app
