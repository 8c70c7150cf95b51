#include "presets.hpp"

#include "flowedit/errors.hpp"

namespace flowedit::app {

namespace {

PresetColumn column(float clip, float sm, float color, float id, float reg, int blur) {
  return {LossWeights{clip, sm, reg, color, id}, blur};
}

}  // namespace

const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = {
      {"angry-face", "angry face", column(10, 10, 0, 0.1f, 0, 71), column(10, 10, 0, 0.1f, 0.1f, 0), std::nullopt},
      {"smiling-face", "smiling face", column(10, 10, 0, 0.1f, 0, 71), column(10, 10, 0, 0.1f, 0.1f, 0),
       std::nullopt},
      {"big-eyes", "big eyes", column(10, 10, 0, 0.5f, 0, 51), column(10, 10, 0, 0.5f, 0.5f, 0), std::nullopt},
      {"chubby", "chubby", column(30, 10, 0, 0.2f, 0, 91), column(30, 10, 0, 0.1f, 0.1f, 0), std::nullopt},
      {"shrek", "Shrek", column(10, 10, 20, 0.1f, 0, 51), column(10, 10, 20, 0.1f, 0.1f, 0), std::nullopt},
      {"voldemort", "Voldemort", column(30, 10, 50, 0.1f, 0, 71), column(30, 10, 50, 0.1f, 0.1f, 0),
       std::nullopt},
      {"oneshot", "", std::nullopt, std::nullopt, column(10, 10, 10, 0.1f, 0, 51)},
  };
  return table;
}

const Preset& find_preset(std::string_view name) {
  for (const Preset& p : presets()) {
    if (p.name == name) return p;
  }
  std::string known;
  for (const Preset& p : presets()) known += (known.empty() ? "" : ", ") + p.name;
  throw ConfigError("unknown preset '" + std::string(name) + "' (known: " + known + ")");
}

}  // namespace flowedit::app
