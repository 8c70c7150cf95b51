#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "settings.hpp"

namespace flowedit::app {

enum ExitCode : int { kOk = 0, kConfigError = 1, kIoError = 2, kGuidanceError = 3 };

/// Parses `args` (without the program name) and dispatches to a subcommand.
/// Errors are reported on `err` and mapped to ExitCode values.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Exit code for the exception currently being handled, after printing it.
int report_current_exception(std::ostream& err);

void cmd_edit(const RunConfig& config, std::ostream& out);

struct VideoPaths {
  std::string frames;
  std::string landmarks;
  std::string out_dir;
};
void cmd_video(const RunConfig& config, const VideoPaths& paths, std::ostream& out);

struct TrainOneshotOptions {
  std::string images;
  std::string prompts;
  std::string checkpoint;
  std::string trace;
  int epochs = 100;
  int max_steps = -1;
  float lr = 1e-4f;
  int halve_every_epochs = 10;
  LossWeights weights{10.0f, 10.0f, 0.0f, 10.0f, 0.1f};
  int blur_kernel = 51;
  float alpha = 1.0f;
  std::uint64_t seed = 0;
  bool augment = true;
  float width_factor = 0.25f;
  int heads = 2;
  GuidanceKind guidance = GuidanceKind::ToyEmbed;
  std::uint64_t guidance_seed = 0;
  int embed_dim = 64;
  std::string target;
  std::string sidecar_addr;
};
void cmd_train_oneshot(const TrainOneshotOptions& options, std::ostream& out);

struct OneshotInferOptions {
  std::string checkpoint;
  std::string image;
  std::string prompt;
  std::string out;
  std::string save_flow;
  std::string flow_vis;
  int blur_kernel = 51;
  float alpha = 1.0f;
  GuidanceKind guidance = GuidanceKind::ToyEmbed;
  std::uint64_t guidance_seed = 0;
  std::string target;
  std::string sidecar_addr;
};
void cmd_oneshot_infer(const OneshotInferOptions& options, std::ostream& out);

}  // namespace flowedit::app
