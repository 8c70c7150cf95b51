#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "fake_sidecar.hpp"
#include "fixtures.hpp"
#include "flowedit/errors.hpp"
#include "flowedit/oneshot.hpp"
#include "flowedit/video.hpp"
#include "flowedit/warp.hpp"
#include "presets.hpp"
#include "settings.hpp"

namespace flowedit::app {
namespace {

using flowedit::testing::read_bytes;
using flowedit::testing::TempDir;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    input = dir / "in.png";
    target = dir / "target.png";
    write_image(input, flowedit::testing::smooth_image(32, 32, 1));
    write_image(target, flowedit::testing::shift_image(read_image(input), 2, 0));
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }

  TempDir dir{"cli"};
  std::filesystem::path input;
  std::filesystem::path target;
};

TEST_F(CliTest, ZeroIterationsCopiesInput) {
  const CliRun r = cli({"edit", "--image", input.string(), "--prompt", "angry face", "--iters", "0", "--out",
                        path("out.png")});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(read_image(path("out.png")), read_image(input));
  EXPECT_EQ(read_bytes(path("out.png")), read_bytes(input));
}

TEST_F(CliTest, MissingInputIsIoErrorWithoutOutput) {
  const CliRun r = cli({"edit", "--image", path("nope.png"), "--prompt", "p", "--iters", "1", "--out",
                        path("out.png")});
  EXPECT_EQ(r.code, kIoError);
  EXPECT_FALSE(r.err.empty());
  EXPECT_FALSE(std::filesystem::exists(path("out.png")));
}

TEST_F(CliTest, ProcessExitCodes) {
  const std::string bin = FLOWEDIT_CLI;
  auto status = [&](const std::string& args) {
    const int s = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status("edit --image " + path("nope.png") + " --prompt p --out " + path("o.png")), 2);
  EXPECT_EQ(status("edit --image " + input.string() + " --prompt p --mode inr --blur-kernel 51 --out " + path("o.png")),
            1);
  EXPECT_EQ(status("edit --image " + input.string() + " --prompt p --iters 0 --out " + path("o.png")), 0);
  EXPECT_EQ(status("--bogus"), 1);
  EXPECT_EQ(status("--help"), 0);
  EXPECT_FALSE(std::filesystem::exists(path("nope.png")));
}

TEST_F(CliTest, DeterministicAcrossRuns) {
  for (const char* name : {"a", "b"}) {
    const std::string n(name);
    const CliRun r = cli({"edit", "--image", input.string(), "--prompt", "angry face", "--mode", "inr", "--guidance",
                          "toy-embed", "--seed", "7", "--iters", "25", "--out", path(n + ".png"), "--save-flow",
                          path(n + ".vff"), "--trace", path(n + ".csv")});
    ASSERT_EQ(r.code, kOk) << r.err;
  }
  EXPECT_EQ(read_bytes(path("a.png")), read_bytes(path("b.png")));
  EXPECT_EQ(read_bytes(path("a.vff")), read_bytes(path("b.vff")));
  EXPECT_EQ(read_bytes(path("a.csv")), read_bytes(path("b.csv")));
}

TEST_F(CliTest, ArtifactsAndFlowReuse) {
  CliRun r = cli({"edit", "--image", input.string(), "--guidance", "toy-target", "--target", target.string(),
                  "--prompt", "p", "--iters", "30", "--blur-kernel", "11", "--lambda-color", "1", "--out",
                  path("e.png"), "--save-flow", path("e.vff"), "--trace", path("e.csv"), "--flow-vis",
                  path("vis.png")});
  ASSERT_EQ(r.code, kOk) << r.err;
  const RasterField packed = read_vff(path("e.vff"));
  EXPECT_EQ(packed.channels, 3);
  EXPECT_EQ(packed.height, 32);
  const Image vis = read_image(path("vis.png"));
  EXPECT_EQ(vis.height, 32);
  EXPECT_EQ(vis.width, 32);
  std::ifstream csv(path("e.csv"));
  int lines = 0;
  for (std::string line; std::getline(csv, line);) ++lines;
  EXPECT_EQ(lines, 31);

  r = cli({"edit", "--image", input.string(), "--load-flow", path("e.vff"), "--out", path("reuse.png")});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(read_bytes(path("reuse.png")), read_bytes(path("e.png")));

  write_image(path("small.png"), Image(16, 16, 0.5f));
  r = cli({"edit", "--image", path("small.png"), "--load-flow", path("e.vff"), "--out", path("x.png")});
  EXPECT_EQ(r.code, kConfigError);
}

TEST_F(CliTest, ConfigurationErrorsExitOne) {
  const std::string img = input.string(), out = path("o.png");
  for (const std::vector<std::string>& args : std::vector<std::vector<std::string>>{
           {"edit", "--image", img, "--prompt", "p", "--mode", "explicit", "--lambda-reg", "0.1", "--out", out},
           {"edit", "--image", img, "--prompt", "p", "--mode", "explicit", "--blur-kernel", "0", "--out", out},
           {"edit", "--image", img, "--prompt", "p", "--mode", "explicit", "--blur-kernel", "8", "--out", out},
           {"edit", "--image", img, "--prompt", "p", "--mode", "inr", "--blur-kernel", "51", "--out", out},
           {"edit", "--image", img, "--prompt", "p", "--mode", "inr", "--lambda-reg", "0", "--out", out},
           {"edit", "--image", img, "--prompt", "p", "--mode", "sideways", "--out", out},
           {"edit", "--image", img, "--prompt", "p", "--lambda-sm", "-1", "--out", out},
           {"edit", "--image", img, "--out", out},
           {"edit", "--image", img, "--prompt", "p", "--guidance", "toy-target", "--out", out},
           {"edit", "--image", img, "--prompt", "p", "--guidance", "clip", "--out", out},
           {"edit", "--image", img, "--preset", "oneshot", "--out", out},
           {"edit", "--image", img, "--preset", "mona-lisa", "--out", out},
           {"edit", "--prompt", "p", "--out", out},
           {"edit", "--image", img, "--prompt", "p", "--iters", "many", "--out", out},
       }) {
    const CliRun r = cli(args);
    EXPECT_EQ(r.code, kConfigError) << args[5] << " " << (args.size() > 6 ? args[6] : "") << ": " << r.err;
  }
  EXPECT_FALSE(std::filesystem::exists(out));
}

TEST_F(CliTest, SidecarGuidance) {
  flowedit::testing::FakeSidecar server;
  CliRun r = cli({"edit", "--image", input.string(), "--prompt", "p", "--guidance", "sidecar", "--sidecar-addr",
                  server.address(), "--embed-dim", "32", "--iters", "2", "--no-augment", "--out", path("s.png")});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(server.requests_seen(), 2);

  ::setenv("FLOWEDIT_SIDECAR_ADDR", server.address().c_str(), 1);
  r = cli({"edit", "--image", input.string(), "--prompt", "p", "--guidance", "sidecar", "--iters", "1",
           "--no-augment", "--out", path("env.png")});
  EXPECT_EQ(r.code, kOk) << r.err;
  ::unsetenv("FLOWEDIT_SIDECAR_ADDR");

  r = cli({"edit", "--image", input.string(), "--prompt", "p", "--guidance", "sidecar", "--iters", "1", "--out",
           path("none.png")});
  EXPECT_EQ(r.code, kConfigError);
}

TEST_F(CliTest, SidecarFailuresExitThree) {
  std::string dead;
  {
    flowedit::testing::FakeSidecar gone;
    dead = gone.address();
  }
  CliRun r = cli({"edit", "--image", input.string(), "--prompt", "p", "--guidance", "sidecar", "--sidecar-addr", dead,
                  "--iters", "1", "--out", path("x.png")});
  EXPECT_EQ(r.code, kGuidanceError);
  flowedit::testing::FakeSidecar hangup(flowedit::testing::FakeSidecar::Mode::HangUp);
  r = cli({"edit", "--image", input.string(), "--prompt", "p", "--guidance", "sidecar", "--sidecar-addr",
           hangup.address(), "--iters", "3", "--no-augment", "--out", path("x.png"), "--trace", path("x.csv")});
  EXPECT_EQ(r.code, kGuidanceError);
  EXPECT_FALSE(std::filesystem::exists(path("x.png")));
  EXPECT_TRUE(std::filesystem::exists(path("x.csv")));
}

TEST_F(CliTest, SingleFrameVideoMatchesEdit) {
  std::filesystem::create_directory(dir / "frames");
  std::filesystem::copy_file(input, dir / "frames" / frame_name(0));
  const std::vector<std::string> common{"--prompt", "smile", "--seed", "3", "--iters", "10", "--blur-kernel", "11"};
  std::vector<std::string> edit{"edit", "--image", input.string(), "--out", path("edit.png")};
  std::vector<std::string> video{"video", "--frames", path("frames"), "--out-dir", path("vout")};
  edit.insert(edit.end(), common.begin(), common.end());
  video.insert(video.end(), common.begin(), common.end());
  ASSERT_EQ(cli(edit).code, kOk);
  const CliRun r = cli(video);
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(read_bytes(path("vout/" + frame_name(0))), read_bytes(path("edit.png")));
}

TEST_F(CliTest, VideoRequiresMatchingLandmarks) {
  std::filesystem::create_directory(dir / "frames");
  for (int k = 0; k < 2; ++k) std::filesystem::copy_file(input, dir / "frames" / frame_name(k));
  std::ofstream(path("lm.csv")) << "1,1,20,2,3,25,28,28\n";
  EXPECT_EQ(cli({"video", "--frames", path("frames"), "--out-dir", path("v"), "--prompt", "p", "--iters", "1"}).code,
            kConfigError);
  EXPECT_EQ(cli({"video", "--frames", path("frames"), "--landmarks", path("lm.csv"), "--out-dir", path("v"),
                 "--prompt", "p", "--iters", "1"})
                .code,
            kConfigError);
  std::ofstream(path("lm.csv"), std::ios::app) << "2,1,21,2,4,25,29,28\n";
  const CliRun r = cli({"video", "--frames", path("frames"), "--landmarks", path("lm.csv"), "--out-dir", path("v"),
                        "--prompt", "p", "--iters", "2", "--blur-kernel", "11"});
  EXPECT_EQ(r.code, kOk) << r.err;
  EXPECT_TRUE(std::filesystem::exists(path("v/" + frame_name(1))));
  EXPECT_EQ(cli({"video", "--frames", path("none"), "--out-dir", path("v"), "--prompt", "p"}).code, kIoError);
}

TEST_F(CliTest, TrainThenInferReproducesTrainingForward) {
  std::filesystem::create_directory(dir / "data");
  write_image(dir / "data" / "a.png", flowedit::testing::smooth_image(16, 16, 4));
  write_image(dir / "data" / "b.png", flowedit::testing::smooth_image(16, 16, 5));
  std::ofstream(path("prompts.txt")) << "a smiling face\nan old face\n";
  CliRun r = cli({"train-oneshot", "--images", path("data"), "--prompts", path("prompts.txt"), "--checkpoint",
                  path("net.osn"), "--trace", path("train.csv"), "--epochs", "2", "--width-factor", "0.125",
                  "--embed-dim", "16", "--blur-kernel", "5", "--lr", "1e-3", "--seed", "9"});
  ASSERT_EQ(r.code, kOk) << r.err;

  // The same run in-process: the network as it stands at the end of training.
  OneShotArch arch = OneShotArch::scaled(0.125f);
  arch.text_dim = 16;
  OneShotNet net(arch, 9);
  OneShotTrainConfig tc;
  tc.epochs = 2;
  tc.lr = 1e-3f;
  tc.blur_kernel = 5;
  tc.seed = 9;
  tc.augmentation.seed = 9;
  ToyEmbedScorer scorer(0, 16);
  train_oneshot(net, load_image_dir(dir / "data"), load_prompts(path("prompts.txt")), scorer, tc);

  r = cli({"oneshot-infer", "--checkpoint", path("net.osn"), "--image", path("data/a.png"), "--prompt",
           "an old face", "--blur-kernel", "5", "--out", path("inf.png"), "--save-flow", path("inf.vff")});
  ASSERT_EQ(r.code, kOk) << r.err;
  const OneShotEdit expected = oneshot_edit(net, read_image(path("data/a.png")), scorer.text_embedding("an old face"), 5);
  SpatialFlowField flow;
  ColorFlowField cflow;
  unpack_flow(read_vff(path("inf.vff")), flow, cflow);
  EXPECT_EQ(flow.values, expected.flow.values);
  EXPECT_EQ(cflow.values, expected.cflow.values);
  write_image(path("expected.png"), expected.edited);
  EXPECT_EQ(read_bytes(path("inf.png")), read_bytes(path("expected.png")));
}

TEST_F(CliTest, InferRejectsBadCheckpoints) {
  OneShotArch arch = OneShotArch::scaled(0.125f);
  arch.text_dim = 16;
  save_oneshot(path("net.osn"), OneShotNet(arch, 1));
  auto bytes = read_bytes(path("net.osn"));
  auto write = [&](const std::string& name, const std::vector<unsigned char>& b) {
    std::ofstream out(path(name), std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  };
  const std::vector<std::string> base{"oneshot-infer", "--image", input.string(), "--prompt", "p", "--out"};
  auto infer = [&](const std::string& ckpt) {
    std::vector<std::string> args = base;
    args.push_back(path("o.png"));
    args.push_back("--checkpoint");
    args.push_back(path(ckpt));
    return cli(args).code;
  };
  EXPECT_EQ(infer("net.osn"), kOk);
  std::filesystem::remove(path("o.png"));

  flowedit::testing::FakeSidecar wide_embeddings;  // 32-dimensional, checkpoint expects 16
  EXPECT_EQ(cli({"oneshot-infer", "--image", input.string(), "--prompt", "p", "--out", path("o.png"), "--checkpoint",
                 path("net.osn"), "--guidance", "sidecar", "--sidecar-addr", wide_embeddings.address()})
                .code,
            kConfigError);

  auto wrong_count = bytes;
  // The u64 parameter count sits right before the parameters.
  const std::size_t count_offset = bytes.size() - 4 * OneShotNet(arch, 1).parameter_count() - 8;
  wrong_count[count_offset] ^= 1;
  write("count.osn", wrong_count);
  EXPECT_EQ(infer("count.osn"), kConfigError);

  auto zero_heads = bytes;
  zero_heads[4 + 4 * 5 + 4] = 0;
  write("heads.osn", zero_heads);
  EXPECT_EQ(infer("heads.osn"), kConfigError);

  bytes.resize(bytes.size() / 2);
  write("short.osn", bytes);
  EXPECT_EQ(infer("short.osn"), kIoError);
  EXPECT_EQ(infer("missing.osn"), kIoError);
  EXPECT_FALSE(std::filesystem::exists(path("o.png")));
}

TEST(RunConfig, LayersApplyInOrder) {
  Layer cli_layer{{"lambda_id", 0.7}, {"prompt", "override"}};
  Layer file{{"preset", "shrek"}, {"lambda_sm", 5.0}, {"lambda_id", 0.3}};
  RunConfig rc = resolve_run_config(merge(file, cli_layer));
  EXPECT_EQ(rc.edit.weights.clip, 10.0f);   // preset
  EXPECT_EQ(rc.edit.weights.color, 20.0f);  // preset
  EXPECT_EQ(rc.edit.weights.sm, 5.0f);      // file over preset
  EXPECT_FLOAT_EQ(rc.edit.weights.id, 0.7f);  // flag over file
  EXPECT_EQ(rc.edit.blur_kernel, 51);
  EXPECT_EQ(rc.prompt, "override");
  EXPECT_TRUE(rc.edit.color_enabled());

  rc = resolve_run_config(Layer{{"preset", "shrek"}});
  EXPECT_EQ(rc.prompt, "Shrek");
  rc = resolve_run_config(Layer{{"preset", "chubby"}, {"mode", "inr"}});
  EXPECT_EQ(rc.edit.weights.clip, 30.0f);
  EXPECT_EQ(rc.edit.blur_kernel, 0);
  EXPECT_FLOAT_EQ(rc.edit.weights.reg, 0.1f);
}

TEST(RunConfig, DefaultsPerMode) {
  const RunConfig e = resolve_run_config(Layer{{"prompt", "p"}});
  EXPECT_EQ(e.edit.mode, FieldMode::Explicit);
  EXPECT_EQ(e.edit.iterations, 3000);
  EXPECT_FLOAT_EQ(e.edit.lr, 1e-2f);
  EXPECT_EQ(e.edit.halve_every, 1000);
  EXPECT_EQ(e.edit.blur_kernel, 51);
  EXPECT_EQ(e.edit.weights.reg, 0.0f);
  EXPECT_EQ(e.guidance, GuidanceKind::ToyEmbed);
  const RunConfig i = resolve_run_config(Layer{{"prompt", "p"}, {"mode", "inr"}});
  EXPECT_EQ(i.edit.blur_kernel, 0);
  EXPECT_FLOAT_EQ(i.edit.weights.reg, 0.1f);
}

TEST(RunConfig, ToyTargetDisablesAugmentationUnlessAsked) {
  EXPECT_FALSE(resolve_run_config(Layer{{"prompt", "p"}, {"guidance", "toy-target"}, {"target", "t.png"}}).edit.augment);
  EXPECT_TRUE(resolve_run_config(Layer{{"prompt", "p"}, {"guidance", "toy-target"}, {"target", "t.png"},
                                       {"augment", true}})
                  .edit.augment);
}

TEST(RunConfig, RejectsUnknownKeysAndWrongTypes) {
  EXPECT_THROW(resolve_run_config(Layer{{"prompt", "p"}, {"lamda_sm", 1.0}}), ConfigError);
  EXPECT_THROW(resolve_run_config(Layer{{"prompt", "p"}, {"iters", "ten"}}), ConfigError);
}

TEST_F(CliTest, ConfigFileLayer) {
  std::ofstream(path("cfg.json")) << R"({"prompt": "from file", "iters": 0, "out": ")" << path("cfg.png") << "\"}";
  CliRun r = cli({"edit", "--config", path("cfg.json"), "--image", input.string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_TRUE(std::filesystem::exists(path("cfg.png")));
  std::ofstream(path("bad.json")) << "[1, 2]";
  EXPECT_EQ(cli({"edit", "--config", path("bad.json"), "--image", input.string()}).code, kConfigError);
  std::ofstream(path("broken.json")) << "{";
  EXPECT_EQ(cli({"edit", "--config", path("broken.json"), "--image", input.string()}).code, kConfigError);
  EXPECT_EQ(cli({"edit", "--config", path("absent.json"), "--image", input.string()}).code, kIoError);
}

struct TableRow {
  const char* name;
  const char* prompt;
  float clip, sm, color, id, reg;
  int blur;
};

TEST(Presets, MatchExperimentTable) {
  const TableRow explicit_rows[] = {
      {"angry-face", "angry face", 10, 10, 0, 0.1f, 0, 71}, {"smiling-face", "smiling face", 10, 10, 0, 0.1f, 0, 71},
      {"big-eyes", "big eyes", 10, 10, 0, 0.5f, 0, 51},      {"chubby", "chubby", 30, 10, 0, 0.2f, 0, 91},
      {"shrek", "Shrek", 10, 10, 20, 0.1f, 0, 51},           {"voldemort", "Voldemort", 30, 10, 50, 0.1f, 0, 71},
  };
  const TableRow inr_rows[] = {
      {"angry-face", "angry face", 10, 10, 0, 0.1f, 0.1f, 0}, {"smiling-face", "smiling face", 10, 10, 0, 0.1f, 0.1f, 0},
      {"big-eyes", "big eyes", 10, 10, 0, 0.5f, 0.5f, 0},      {"chubby", "chubby", 30, 10, 0, 0.1f, 0.1f, 0},
      {"shrek", "Shrek", 10, 10, 20, 0.1f, 0.1f, 0},           {"voldemort", "Voldemort", 30, 10, 50, 0.1f, 0.1f, 0},
  };
  auto check = [](const PresetColumn& col, const TableRow& row) {
    EXPECT_EQ(col.weights, (LossWeights{row.clip, row.sm, row.reg, row.color, row.id})) << row.name;
    EXPECT_EQ(col.blur_kernel, row.blur) << row.name;
  };
  for (std::size_t i = 0; i < std::size(explicit_rows); ++i) {
    const Preset& p = find_preset(explicit_rows[i].name);
    EXPECT_EQ(p.prompt, explicit_rows[i].prompt);
    ASSERT_TRUE(p.explicit_mode && p.inr_mode) << p.name;
    EXPECT_FALSE(p.oneshot.has_value());
    check(*p.explicit_mode, explicit_rows[i]);
    check(*p.inr_mode, inr_rows[i]);
  }
  const Preset& o = find_preset("oneshot");
  ASSERT_TRUE(o.oneshot);
  check(*o.oneshot, {"oneshot", "", 10, 10, 10, 0.1f, 0, 51});
  EXPECT_EQ(presets().size(), 7u);
  EXPECT_THROW(find_preset("gollum"), ConfigError);
}

TEST(Presets, EveryRowPassesModeValidation) {
  for (const Preset& p : presets()) {
    if (p.explicit_mode) {
      EditConfig c = mode_defaults(FieldMode::Explicit);
      c.weights = p.explicit_mode->weights;
      c.blur_kernel = p.explicit_mode->blur_kernel;
      EXPECT_NO_THROW(c.validate()) << p.name;
    }
    if (p.inr_mode) {
      EditConfig c = mode_defaults(FieldMode::Inr);
      c.weights = p.inr_mode->weights;
      c.blur_kernel = p.inr_mode->blur_kernel;
      EXPECT_NO_THROW(c.validate()) << p.name;
    }
  }
}

TEST(SidecarAddress, FlagThenEnvironment) {
  ::unsetenv("FLOWEDIT_SIDECAR_ADDR");
  EXPECT_THROW(sidecar_address(""), ConfigError);
  EXPECT_EQ(sidecar_address("h:1"), "h:1");
  ::setenv("FLOWEDIT_SIDECAR_ADDR", "env:2", 1);
  EXPECT_EQ(sidecar_address(""), "env:2");
  EXPECT_EQ(sidecar_address("h:1"), "h:1");
  ::unsetenv("FLOWEDIT_SIDECAR_ADDR");
}

}  // namespace
}  // namespace flowedit::app
