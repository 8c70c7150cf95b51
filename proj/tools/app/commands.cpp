#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "flowedit/errors.hpp"
#include "flowedit/oneshot.hpp"
#include "flowedit/video.hpp"
#include "flowedit/warp.hpp"
#include "presets.hpp"

namespace flowedit::app {

namespace {

std::string key_of(const std::string& flag) {
  std::string key = flag.substr(2);
  for (char& c : key) {
    if (c == '-') c = '_';
  }
  return key;
}

template <typename T>
void layer_option(CLI::App* app, Layer& layer, const std::string& flag, const std::string& help) {
  const std::string key = key_of(flag);
  app->add_option_function<T>(flag, [&layer, key](const T& v) { layer[key] = v; }, help);
}

void add_edit_options(CLI::App* app, Layer& layer, std::string& config_path) {
  app->add_option("--config", config_path, "JSON file of settings; flags override it");
  layer_option<std::string>(app, layer, "--image", "input image (PNG or PPM)");
  layer_option<std::string>(app, layer, "--prompt", "text prompt");
  layer_option<std::string>(app, layer, "--mode", "explicit or inr");
  layer_option<int>(app, layer, "--iters", "optimization steps");
  layer_option<float>(app, layer, "--lr", "Adam learning rate");
  layer_option<int>(app, layer, "--halve-every", "halve the learning rate every N steps");
  layer_option<float>(app, layer, "--lambda-clip", "guidance weight");
  layer_option<float>(app, layer, "--lambda-sm", "smoothness weight");
  layer_option<float>(app, layer, "--lambda-reg", "field magnitude weight (INR mode)");
  layer_option<float>(app, layer, "--lambda-color", "color loss weight; 0 disables the color field");
  layer_option<float>(app, layer, "--lambda-id", "identity weight");
  layer_option<int>(app, layer, "--blur-kernel", "Gaussian blur size for explicit fields (odd), 0 for INR");
  layer_option<float>(app, layer, "--alpha", "field amplitude");
  layer_option<std::string>(app, layer, "--guidance", "toy-target, toy-embed or sidecar");
  layer_option<std::string>(app, layer, "--target", "target image for toy-target guidance");
  layer_option<std::string>(app, layer, "--sidecar-addr", "host:port or stdio:<command>");
  layer_option<std::uint64_t>(app, layer, "--guidance-seed", "toy-embed projection seed");
  layer_option<int>(app, layer, "--embed-dim", "toy scorer embedding size");
  layer_option<std::uint64_t>(app, layer, "--seed", "run seed");
  layer_option<std::string>(app, layer, "--out", "output image");
  layer_option<std::string>(app, layer, "--save-flow", "write the fields as VFF1");
  layer_option<std::string>(app, layer, "--load-flow", "apply fields from a VFF1 file instead of optimizing");
  layer_option<std::string>(app, layer, "--trace", "per-step loss CSV");
  layer_option<std::string>(app, layer, "--flow-vis", "color-wheel rendering of the spatial field");
  layer_option<std::string>(app, layer, "--preset", "named loss settings, e.g. shrek");
  layer_option<int>(app, layer, "--augment-count", "augmented views per step");
  layer_option<float>(app, layer, "--augment-magnitude", "augmentation strength in [0, 1]");
  layer_option<float>(app, layer, "--max-displacement", "INR spatial output scale in pixels");
  app->add_flag_function("--no-augment", [&layer](std::int64_t) { layer["augment"] = false; },
                         "score the edited image without augmentation");
}

RunConfig resolve(const Layer& cli, const std::string& config_path) {
  Layer base = config_path.empty() ? Layer::object() : read_config_file(config_path);
  return resolve_run_config(merge(base, cli));
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string(flag) + " is required");
}

void write_artifacts(const RunConfig& rc, const SpatialFlowField& flow, const ColorFlowField& cflow,
                     const std::vector<TraceRow>* trace) {
  if (!rc.save_flow.empty()) write_vff(rc.save_flow, pack_flow(flow, cflow));
  if (!rc.trace.empty() && trace != nullptr) write_trace_csv(rc.trace, *trace);
  if (!rc.flow_vis.empty()) write_image(rc.flow_vis, visualize_flow(flow));
}

void load_fields(const std::string& path, int height, int width, SpatialFlowField& flow, ColorFlowField& cflow) {
  unpack_flow(read_vff(path), flow, cflow);
  if (flow.height != height || flow.width != width) {
    throw ConfigError("flow file '" + path + "' is " + std::to_string(flow.height) + "x" +
                      std::to_string(flow.width) + ", image is " + std::to_string(height) + "x" +
                      std::to_string(width));
  }
}

EditResult optimize_or_abort(const RunConfig& rc, const Image& image) {
  auto scorer = make_scorer(rc.guidance, rc.guidance_seed, rc.embed_dim, rc.target, rc.sidecar_addr);
  try {
    return run_iterative(image, rc.prompt, rc.edit, *scorer);
  } catch (const EditAborted& e) {
    if (!rc.trace.empty()) write_trace_csv(rc.trace, e.trace());
    throw;
  }
}

}  // namespace

void cmd_edit(const RunConfig& rc, std::ostream& out) {
  require(rc.image, "--image");
  require(rc.out, "--out");
  const Image image = read_image(rc.image);
  if (!rc.load_flow.empty()) {
    SpatialFlowField flow;
    ColorFlowField cflow;
    load_fields(rc.load_flow, image.height, image.width, flow, cflow);
    write_image(rc.out, warp_image(image, flow, cflow));
    write_artifacts(rc, flow, cflow, nullptr);
    out << "wrote " << rc.out << " using fields from " << rc.load_flow << '\n';
    return;
  }
  EditResult r = optimize_or_abort(rc, image);
  write_image(rc.out, r.edited);
  write_artifacts(rc, r.flow, r.cflow, &r.trace);
  out << "wrote " << rc.out << " (" << rc.edit.iterations << " steps, best step " << r.best_step << ", loss "
      << r.best_loss << ")\n";
}

void cmd_video(const RunConfig& rc, const VideoPaths& paths, std::ostream& out) {
  require(paths.frames, "--frames");
  require(paths.out_dir, "--out-dir");
  const std::vector<Image> frames = read_frames(paths.frames);
  LandmarkTrack track;
  if (!paths.landmarks.empty()) {
    track = read_landmarks_csv(paths.landmarks);
  } else if (frames.size() == 1) {
    track.resize(1);
  } else {
    throw ConfigError("--landmarks is required for more than one frame");
  }
  if (track.size() != frames.size()) {
    throw ConfigError(std::to_string(frames.size()) + " frames but " + std::to_string(track.size()) +
                      " landmark rows");
  }
  SpatialFlowField flow;
  ColorFlowField cflow;
  const std::vector<TraceRow>* trace = nullptr;
  EditResult first;
  if (!rc.load_flow.empty()) {
    load_fields(rc.load_flow, frames[0].height, frames[0].width, flow, cflow);
  } else {
    first = optimize_or_abort(rc, frames[0]);
    flow = first.flow;
    cflow = first.cflow;
    trace = &first.trace;
  }
  std::vector<Image> edited = frames.size() == 1 ? std::vector<Image>{warp_image(frames[0], flow, cflow)}
                                                 : propagate_edit(frames, track, flow, cflow);
  write_frames(paths.out_dir, edited);
  write_artifacts(rc, flow, cflow, trace);
  out << "wrote " << edited.size() << " frames to " << paths.out_dir << '\n';
}

void cmd_train_oneshot(const TrainOneshotOptions& o, std::ostream& out) {
  require(o.images, "--images");
  require(o.prompts, "--prompts");
  require(o.checkpoint, "--checkpoint");
  OneShotArch arch = OneShotArch::scaled(o.width_factor);
  arch.heads = o.heads;
  arch.text_dim = o.embed_dim;
  arch.validate();

  OneShotTrainConfig tc;
  tc.epochs = o.epochs;
  tc.max_steps = o.max_steps;
  tc.lr = o.lr;
  tc.halve_every_epochs = o.halve_every_epochs;
  tc.weights = o.weights;
  tc.blur_kernel = o.blur_kernel;
  tc.alpha = o.alpha;
  tc.seed = o.seed;
  tc.augment = o.augment && o.guidance != GuidanceKind::ToyTarget;
  tc.augmentation.seed = o.seed;
  tc.validate();

  const std::vector<Image> images = load_image_dir(o.images);
  if (images.empty()) throw ConfigError("no images in '" + o.images + "'");
  const std::vector<std::string> prompts = load_prompts(o.prompts);
  if (prompts.empty()) throw ConfigError("prompt list '" + o.prompts + "' is empty");

  auto scorer = make_scorer(o.guidance, o.guidance_seed, o.embed_dim, o.target, o.sidecar_addr);
  OneShotNet net(arch, o.seed);
  std::ofstream trace_file;
  if (!o.trace.empty()) {
    trace_file.open(o.trace);
    if (!trace_file) throw IoError("cannot open '" + o.trace + "' for writing");
    trace_file << "epoch,step,total,lr\n";
    trace_file.precision(9);
  }
  auto rows = train_oneshot(net, images, prompts, *scorer, tc, nullptr, [&](const OneShotTraceRow& r) {
    if (trace_file.is_open()) trace_file << r.epoch << ',' << r.step << ',' << r.total << ',' << r.lr << '\n';
  });
  save_oneshot(o.checkpoint, net);
  out << "trained " << rows.size() << " steps; checkpoint " << o.checkpoint << '\n';
}

void cmd_oneshot_infer(const OneshotInferOptions& o, std::ostream& out) {
  require(o.checkpoint, "--checkpoint");
  require(o.image, "--image");
  require(o.prompt, "--prompt");
  require(o.out, "--out");
  if (o.blur_kernel < 0 || (o.blur_kernel > 0 && o.blur_kernel % 2 == 0)) {
    throw ConfigError("--blur-kernel must be 0 or odd");
  }
  if (!(o.alpha >= 0.0f)) throw ConfigError("--alpha must be >= 0");
  const OneShotNet net = load_oneshot(o.checkpoint);
  const Image image = read_image(o.image);
  auto scorer = make_scorer(o.guidance, o.guidance_seed, net.arch().text_dim, o.target, o.sidecar_addr);
  const std::vector<float> text = scorer->text_embedding(o.prompt);
  if (static_cast<int>(text.size()) != net.arch().text_dim) {
    throw ConfigError("checkpoint expects " + std::to_string(net.arch().text_dim) +
                      "-dimensional text embeddings, guidance produced " + std::to_string(text.size()));
  }
  OneShotEdit e = oneshot_edit(net, image, text, o.blur_kernel, o.alpha);
  write_image(o.out, e.edited);
  if (!o.save_flow.empty()) write_vff(o.save_flow, pack_flow(e.flow, e.cflow));
  if (!o.flow_vis.empty()) write_image(o.flow_vis, visualize_flow(e.flow));
  out << "wrote " << o.out << '\n';
}

int report_current_exception(std::ostream& err) {
  try {
    throw;
  } catch (const GuidanceError& e) {
    err << "guidance error: " << e.what() << '\n';
    return kGuidanceError;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::invalid_argument& e) {
    err << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Text-guided image editing with flow fields", "flowedit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "flowedit 0.1.0");

  Layer edit_layer = Layer::object();
  std::string edit_config;
  CLI::App* edit = app.add_subcommand("edit", "optimize fields for one image");
  add_edit_options(edit, edit_layer, edit_config);

  Layer video_layer = Layer::object();
  std::string video_config;
  VideoPaths video_paths;
  CLI::App* video = app.add_subcommand("video", "edit frame 0 and propagate the fields by homography");
  add_edit_options(video, video_layer, video_config);
  video->add_option("--frames", video_paths.frames, "directory of frame_%06d.png");
  video->add_option("--landmarks", video_paths.landmarks, "CSV of per-frame landmarks x0,y0,x1,y1,...");
  video->add_option("--out-dir", video_paths.out_dir, "directory for edited frames");

  TrainOneshotOptions train;
  std::string train_guidance = "toy-embed";
  std::string train_preset;
  CLI::App* tr = app.add_subcommand("train-oneshot", "train the one-shot predictor");
  tr->add_option("--images", train.images, "directory of training images");
  tr->add_option("--prompts", train.prompts, "newline-separated prompt list");
  tr->add_option("--checkpoint", train.checkpoint, "output OSN1 checkpoint");
  tr->add_option("--trace", train.trace, "per-step loss CSV");
  tr->add_option("--epochs", train.epochs, "training epochs");
  tr->add_option("--max-steps", train.max_steps, "stop after this many steps");
  tr->add_option("--lr", train.lr, "Adam learning rate");
  tr->add_option("--halve-every-epochs", train.halve_every_epochs, "halve the learning rate every N epochs");
  tr->add_option("--lambda-clip", train.weights.clip, "guidance weight");
  tr->add_option("--lambda-sm", train.weights.sm, "smoothness weight");
  tr->add_option("--lambda-reg", train.weights.reg, "field magnitude weight");
  tr->add_option("--lambda-color", train.weights.color, "color loss weight");
  tr->add_option("--lambda-id", train.weights.id, "identity weight");
  tr->add_option("--blur-kernel", train.blur_kernel, "blur applied to the predicted spatial field");
  tr->add_option("--alpha", train.alpha, "field amplitude");
  tr->add_option("--seed", train.seed, "initialization and sampling seed");
  tr->add_flag("!--no-augment", train.augment, "score without augmentation");
  tr->add_option("--width-factor", train.width_factor, "channel width factor");
  tr->add_option("--heads", train.heads, "attention heads");
  tr->add_option("--guidance", train_guidance, "toy-target, toy-embed or sidecar");
  tr->add_option("--guidance-seed", train.guidance_seed, "toy-embed projection seed");
  tr->add_option("--embed-dim", train.embed_dim, "text embedding size");
  tr->add_option("--target", train.target, "target image for toy-target guidance");
  tr->add_option("--sidecar-addr", train.sidecar_addr, "host:port or stdio:<command>");
  tr->add_option("--preset", train_preset, "named loss settings (oneshot)");

  OneshotInferOptions infer;
  std::string infer_guidance = "toy-embed";
  CLI::App* inf = app.add_subcommand("oneshot-infer", "edit an image with a trained one-shot checkpoint");
  inf->add_option("--checkpoint", infer.checkpoint, "OSN1 checkpoint");
  inf->add_option("--image", infer.image, "input image");
  inf->add_option("--prompt", infer.prompt, "text prompt");
  inf->add_option("--out", infer.out, "output image");
  inf->add_option("--save-flow", infer.save_flow, "write the fields as VFF1");
  inf->add_option("--flow-vis", infer.flow_vis, "color-wheel rendering of the spatial field");
  inf->add_option("--blur-kernel", infer.blur_kernel, "blur applied to the predicted spatial field");
  inf->add_option("--alpha", infer.alpha, "field amplitude");
  inf->add_option("--guidance", infer_guidance, "text embedding source");
  inf->add_option("--guidance-seed", infer.guidance_seed, "toy-embed seed");
  inf->add_option("--target", infer.target, "target image for toy-target guidance");
  inf->add_option("--sidecar-addr", infer.sidecar_addr, "host:port or stdio:<command>");

  std::vector<std::string> argv_store{"flowedit"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (edit->parsed()) {
      cmd_edit(resolve(edit_layer, edit_config), out);
    } else if (video->parsed()) {
      cmd_video(resolve(video_layer, video_config), video_paths, out);
    } else if (tr->parsed()) {
      train.guidance = parse_guidance_kind(train_guidance);
      if (!train_preset.empty()) {
        const Preset& p = find_preset(train_preset);
        if (!p.oneshot) throw ConfigError("preset '" + p.name + "' has no one-shot settings");
        const bool weights_given = tr->count("--lambda-clip") + tr->count("--lambda-sm") +
                                       tr->count("--lambda-reg") + tr->count("--lambda-color") +
                                       tr->count("--lambda-id") >
                                   0;
        if (weights_given) throw ConfigError("--preset cannot be combined with --lambda-* for train-oneshot");
        train.weights = p.oneshot->weights;
        if (tr->count("--blur-kernel") == 0) train.blur_kernel = p.oneshot->blur_kernel;
      }
      cmd_train_oneshot(train, out);
    } else if (inf->parsed()) {
      infer.guidance = parse_guidance_kind(infer_guidance);
      cmd_oneshot_infer(infer, out);
    }
  } catch (...) {
    return report_current_exception(err);
  }
  return kOk;
}

}  // namespace flowedit::app
