// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "fixtures.hpp"
#include "flowedit/adam.hpp"
#include "flowedit/inr.hpp"
#include "flowedit/losses.hpp"
#include "flowedit/oneshot.hpp"
#include "flowedit/optimize.hpp"
#include "flowedit/video.hpp"
#include "flowedit/warp.hpp"
#include "gradcheck.hpp"
#include "gradient_cases.hpp"
#include "oracles.hpp"
#include "settings.hpp"
#include "video_fixtures.hpp"

namespace flowedit::testing {
namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records a failed sub-check; the detail line lists every measured value either way.
  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "FAILED ";
    }
    detail << what << "; ";
  }
};

template <typename T>
std::string fmt(const char* pattern, T value) {
  char buf[128];
  std::snprintf(buf, sizeof buf, pattern, value);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor constant_flow(int h, int w, float dx, float dy) {
  std::vector<float> v;
  for (int i = 0; i < h * w; ++i) {
    v.push_back(dx);
    v.push_back(dy);
  }
  return Tensor::from({h, w, 2}, std::move(v));
}

Tensor ramp_field(int h, int w, float ax, float by) {
  std::vector<float> v(static_cast<std::size_t>(h) * w * 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      v[(y * w + x) * 2] = ax * static_cast<float>(x);
      v[(y * w + x) * 2 + 1] = by * static_cast<float>(y);
    }
  }
  return Tensor::from({h, w, 2}, std::move(v));
}

void gradient_suite(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_op = 0.0, worst_e2e = 0.0;
  int failed = 0;
  for (const GradientCase& c : gradient_cases()) {
    const double err = c.run();
    if (!(err < c.tolerance)) {
      ++failed;
      o.detail << c.name << "=" << err << " ";
    }
    (c.tolerance == kEndToEndTolerance ? worst_e2e : worst_op) = std::max(
        c.tolerance == kEndToEndTolerance ? worst_e2e : worst_op, err);
  }
  const double secs = seconds_since(t0);
  o.check(failed == 0, std::to_string(gradient_cases().size()) + " cases, " + std::to_string(failed) + " failed");
  o.check(worst_op < kOpTolerance, fmt("worst per-op %.2e < 1e-3", worst_op));
  o.check(worst_e2e < kEndToEndTolerance, fmt("worst end-to-end %.2e < 1e-2", worst_e2e));
  o.check(secs < 60.0, fmt("%.1f s < 60 s", secs));
}

void structural_constants(Outcome& o) {
  o.check(encoded_size(4) == 18, "encoding length " + std::to_string(encoded_size(4)) + " == 18");
  const std::size_t fs = InrArchitecture::spatial_default().parameter_count();
  o.check(fs == 1730, "f_s parameters " + std::to_string(fs) + " == 1730");
  const std::size_t explicit_count = SpatialFlowField(512, 512).parameter_count();
  o.check(explicit_count == 524288, "explicit field at 512^2 " + std::to_string(explicit_count) + " == 524288");

  // The learning rate as recorded by an actual edit run.
  EditConfig c;
  c.iterations = 2001;
  c.weights = {1.0f, 0.01f, 0.0f, 0.0f, 0.0f};
  c.blur_kernel = 3;
  c.augment = false;
  const Image in = smooth_image(8, 8, 1);
  ToyTargetScorer scorer(shift_image(in, 1, 0));
  const EditResult r = run_iterative(in, "p", c, scorer);
  std::vector<int> halvings;
  bool halves = true;
  for (std::size_t i = 1; i < r.trace.size(); ++i) {
    if (r.trace[i].lr != r.trace[i - 1].lr) {
      halvings.push_back(r.trace[i].step);
      halves = halves && r.trace[i].lr == r.trace[i - 1].lr / 2.0f;
    }
  }
  std::string seen;
  for (int s : halvings) seen += (seen.empty() ? "" : "/") + std::to_string(s);
  o.check(halvings == std::vector<int>{1000, 2000} && halves && r.trace.front().lr == 1e-2f,
          "lr 0.01 halves at steps " + seen + " (expected 1000/2000)");
}

void warp_oracles(Outcome& o) {
  double worst = 0.0;
  const Tensor img = random_tensor({6, 5, 3}, 1, 0, 1, false);
  const bool identity = apply_spatial_flow(img, Tensor::zeros({6, 5, 2})).to_vector() == img.to_vector();
  o.check(identity, "zero flow is identity");

  const Image src = smooth_image(12, 14, 2);
  for (auto [dx, dy] : {std::pair{2, 0}, std::pair{-1, 3}, std::pair{0, -2}}) {
    const Image got = Image::from_tensor(
        apply_spatial_flow(src.tensor(), constant_flow(12, 14, static_cast<float>(dx), static_cast<float>(dy))));
    const Image expect = shift_image(src, dx, dy);
    for (int y = 3; y < 9; ++y) {
      for (int x = 3; x < 11; ++x) {
        for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(double(got.at(y, x, c)) - expect.at(y, x, c)));
      }
    }
  }
  o.check(worst <= 1e-6, fmt("integer translation max err %.1e <= 1e-6", worst));

  // [[0, 1], [2, 3]] sampled at (0.25, 0.75): 0.25 * 0.25 * 1 + 0.75 * 0.75 * 2 + 0.25 * 0.75 * 3 = 1.75.
  const Tensor square = Tensor::from({2, 2, 1}, {0, 1, 2, 3});
  const Tensor flow = Tensor::from({2, 2, 2}, {0.25f, 0.75f, 0, 0, 0, 0, 0, 0});
  const double bilinear = std::abs(apply_spatial_flow(square, flow).at(0) - 1.75);
  const Tensor row = apply_spatial_flow(Tensor::from({1, 4, 1}, {0, 1, 2, 3}), constant_flow(1, 4, 0.5f, 0.0f));
  const std::vector<float> half{0.5f, 1.5f, 2.5f, 3.0f};
  double half_err = 0.0;
  for (int i = 0; i < 4; ++i) half_err = std::max(half_err, std::abs(double(row.at(i)) - half[i]));
  o.check(bilinear <= 1e-6 && half_err <= 1e-6, fmt("hand-computed bilinear max err %.1e <= 1e-6",
                                                     std::max(bilinear, half_err)));

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<float> u(0.0f, 1.0f), d(-0.5f, 0.5f);
  double hue = 0.0, sat = 0.0;
  int tested = 0;
  while (tested < 2000) {
    const float r = u(rng), g = u(rng), b = u(rng), dc = d(rng);
    const float v = std::max({r, g, b});
    // Hue of a black or near-black pixel is undefined.
    if (v < kValueEpsilon || std::clamp(v + dc, 0.0f, 1.0f) < 0.05f) continue;
    ++tested;
    const Tensor out = apply_color_flow(Tensor::from({1, 1, 3}, {r, g, b}), Tensor::from({1, 1, 1}, {dc}));
    const auto before = rgb_to_hsv(r, g, b);
    const auto after = rgb_to_hsv(out.at(0), out.at(1), out.at(2));
    if (before[1] > 1e-3) {
      const double dh = std::abs(after[0] - before[0]);
      hue = std::max(hue, std::min(dh, 1.0 - dh));
    }
    sat = std::max(sat, std::abs(after[1] - before[1]));
  }
  o.check(hue <= 1e-5 && sat <= 1e-5,
          fmt("value edit over 2000 pixels: hue drift %.1e", hue) + fmt(", saturation drift %.1e <= 1e-5", sat));
}

void loss_closed_forms(Outcome& o) {
  const double unit = smoothness_loss(ramp_field(9, 7, 1.0f, 0.0f)).item();
  const double aniso = smoothness_loss(ramp_field(8, 11, 2.0f, 3.0f)).item();
  o.check(std::abs(unit - 1.0) <= 1e-6, fmt("smoothness of unit ramp %.9f == 1", unit));
  o.check(std::abs(aniso - 13.0) <= 1e-6, fmt("smoothness of (2x, 3y) ramp %.9f == 13", aniso));
  const Tensor f = random_tensor({6, 6, 2}, 8, -1, 1, false);
  const double base = reg_loss(f).item();
  double worst = 0.0;
  for (float alpha : {0.0f, 0.5f, 2.0f, -3.0f}) {
    const double expect = alpha * alpha * base;
    worst = std::max(worst, std::abs(reg_loss(scale(f, alpha)).item() - expect) / std::max(1.0, expect));
  }
  o.check(worst <= 1e-6, fmt("reg(a f) = a^2 reg(f), max rel err %.1e", worst));
  const double gray = color_loss(Image(6, 6, 0.5f).tensor(), Tensor::full({6, 6, 1}, 0.2f)).item();
  o.check(std::abs(gray - 0.04) <= 1e-6, fmt("color loss of gray + 0.2 %.9f == 0.04", gray));
}

// Mean interior flow after fitting a 2 px translation target at 64^2.
void synthetic_recovery(Outcome& o) {
  const Image in = smooth_image(64, 64, 1);
  ToyTargetScorer scorer(shift_image(in, 2, 0));
  for (FieldMode mode : {FieldMode::Explicit, FieldMode::Inr}) {
    const bool inr = mode == FieldMode::Inr;
    EditConfig c;
    c.mode = mode;
    c.iterations = 500;
    c.weights = {1.0f, 0.01f, inr ? 1e-4f : 0.0f, 0.0f, 0.0f};
    c.blur_kernel = inr ? 0 : 11;
    c.augment = false;
    const auto t0 = std::chrono::steady_clock::now();
    const EditResult r = run_iterative(in, "p", c, scorer);
    const double secs = seconds_since(t0);
    double mx = 0.0, my = 0.0;
    int n = 0;
    for (int y = 8; y < 56; ++y) {
      for (int x = 8; x < 56; ++x) {
        mx += r.flow.at(y, x, 0);
        my += r.flow.at(y, x, 1);
        ++n;
      }
    }
    mx /= n;
    my /= n;
    const double err = std::hypot(mx - 2.0, my);
    const double tol = inr ? 1.0 : 0.5;
    std::ostringstream s;
    s.precision(3);
    s << (inr ? "INR" : "explicit") << " mean flow (" << mx << ", " << my << ") err " << err << " <= " << tol
      << " px in 500 steps, " << secs << " s";
    o.check(err <= tol && (inr || secs < 120.0), s.str());
  }
}

void representation_ordering(Outcome& o) {
  const Image in = smooth_image(256, 256, 1);
  float loss[2];
  for (int i = 0; i < 2; ++i) {
    const bool inr = i == 1;
    ToyEmbedScorer scorer(0);
    EditConfig c;
    c.mode = inr ? FieldMode::Inr : FieldMode::Explicit;
    c.iterations = 200;
    c.weights = {10.0f, 10.0f, inr ? 0.1f : 0.0f, 0.0f, 0.0f};
    c.blur_kernel = inr ? 0 : 51;
    c.augment = false;
    c.seed = 0;
    loss[i] = run_iterative(in, "a smiling face", c, scorer).trace.back().total;
  }
  o.check(loss[1] < loss[0], fmt("step-200 loss INR %.4f", loss[1]) + fmt(" < explicit %.4f", loss[0]));
}

void homography_suite(Outcome& o) {
  double dlt = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Homography truth = random_homography(seed);
    const auto src = random_points(8, 100 + seed);
    const Homography h = estimate_homography(src, map_points(truth, src));
    for (int i = 0; i < 9; ++i) dlt = std::max(dlt, std::abs(h.m[i] - truth.m[i]));
  }
  o.check(dlt <= 1e-6, fmt("DLT on 50 random homographies max entry err %.1e <= 1e-6", dlt));

  constexpr int kSize = 64;
  const auto f = wavy_flow(kSize, kSize);
  const auto c = wavy_color(kSize, kSize);
  double worst_mean = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Homography h = random_homography(seed);
    SpatialFlowField fk, back;
    ColorFlowField ck, cback;
    propagate_flow(f, c, h, fk, ck);
    propagate_flow(fk, ck, h.inverse(), back, cback);
    double err = 0.0;
    int n = 0;
    for (int y = 0; y < kSize; ++y) {
      for (int x = 0; x < kSize; ++x) {
        const Point2 q = h.apply({static_cast<double>(x), static_cast<double>(y)});
        if (q.x < 2 || q.y < 2 || q.x > kSize - 3 || q.y > kSize - 3) continue;
        err += std::hypot(back.at(y, x, 0) - f.at(y, x, 0), back.at(y, x, 1) - f.at(y, x, 1));
        ++n;
      }
    }
    worst_mean = std::max(worst_mean, err / n);
  }
  o.check(worst_mean <= 0.01, fmt("propagated round trip mean err %.2e <= 0.01 px", worst_mean));

  constexpr int kVideo = 48, kFrames = 4;
  const Image base = smooth_image(kVideo, kVideo, 3);
  std::vector<Image> frames;
  for (int k = 0; k < kFrames; ++k) frames.push_back(shift_image(base, -k, 0));
  ToyTargetScorer scorer(shift_image(base, 2, 0));
  const auto video = edit_video(frames, shifted_track(random_points(8, 5, 4, 40), kFrames, 1), "p", quick_config(),
                                scorer);
  double dev = 0.0;
  for (int k = 1; k < kFrames; ++k) {
    for (int y = 6; y < kVideo - 6; ++y) {
      for (int x = 6 + k; x < kVideo - 6; ++x) {
        for (int ch = 0; ch < 3; ++ch) {
          dev = std::max(dev, std::abs(double(video.frames[k].at(y, x, ch)) - video.frames[0].at(y, x - k, ch)));
        }
      }
    }
  }
  o.check(dev <= 1.0 / 255.0, fmt("translated video max deviation %.2e <= 1/255", dev));
}

void oneshot_suite(Outcome& o) {
  double row_err = 0.0;
  std::vector<Tensor> weights;
  cross_attention(random_tensor({6, 8}, 1, -1, 1, false), random_tensor({4, 5}, 2, -1, 1, false),
                  random_tensor({8, 6}, 3, -1, 1, false), random_tensor({5, 6}, 4, -1, 1, false),
                  random_tensor({5, 6}, 5, -1, 1, false), random_tensor({6, 8}, 6, -1, 1, false), 3, &weights);
  for (const Tensor& a : weights) {
    for (int r = 0; r < a.dim(0); ++r) {
      double s = 0.0;
      for (int k = 0; k < a.dim(1); ++k) s += a.at(r * a.dim(1) + k);
      row_err = std::max(row_err, std::abs(s - 1.0));
    }
  }
  o.check(weights.size() == 3 && row_err <= 1e-6, fmt("attention rows sum to 1, max err %.1e", row_err));

  const Image in = smooth_image(64, 64, 1);
  OneShotNet net(OneShotArch{}, 0);
  const OneShotOutput out = net.forward(in.tensor(), text_tokens(std::vector<float>(64, 0.1f)));
  const InrField fc = unflatten_params(InrArchitecture::color_default(), out.theta_c.data());
  o.check(out.theta_c.size() == 593 && flatten_params(fc) == out.theta_c.to_vector(),
          "theta_c length " + std::to_string(out.theta_c.size()) + " == 593 == f_c flattening");

  ToyTargetScorer scorer(shift_image(in, 2, 0));
  OneShotTrainConfig tc;
  tc.epochs = 200;
  tc.lr = 1e-4f;
  tc.blur_kernel = 51;
  tc.augment = false;
  const auto t0 = std::chrono::steady_clock::now();
  const auto trace = train_oneshot(net, {in}, {"p"}, scorer, tc);
  int halved_at = -1;
  for (const auto& row : trace) {
    if (row.total <= 0.5f * trace.front().total) {
      halved_at = row.step;
      break;
    }
  }
  o.check(halved_at >= 0, "overfit loss " + fmt("%.3g", trace.front().total) + " -> " +
                              fmt("%.3g", trace.back().total) + ", halved at step " + std::to_string(halved_at) +
                              " of 200 (" + fmt("%.0f s)", seconds_since(t0)));

  TempDir dir("acceptance-oneshot");
  save_oneshot(dir / "a.osn", net);
  const OneShotNet back = load_oneshot(dir / "a.osn");
  bool same = back.arch() == net.arch() && back.parameters().size() == net.parameters().size();
  for (std::size_t i = 0; same && i < net.parameters().size(); ++i) {
    same = back.parameters()[i].name == net.parameters()[i].name &&
           back.parameters()[i].value.to_vector() == net.parameters()[i].value.to_vector();
  }
  save_oneshot(dir / "b.osn", back);
  o.check(same && read_bytes(dir / "a.osn") == read_bytes(dir / "b.osn"), "checkpoint round trip bit-exact");
}

void determinism(Outcome& o) {
  TempDir dir("acceptance-determinism");
  write_image(dir / "a.png", smooth_image(32, 32, 5));
  for (const std::string run : {"1", "2"}) {
    app::Layer layer{{"image", (dir / "a.png").string()},
                     {"prompt", "angry face"},
                     {"mode", "inr"},
                     {"guidance", "toy-embed"},
                     {"seed", 7},
                     {"iters", 200},
                     {"out", (dir / ("b" + run + ".png")).string()},
                     {"save_flow", (dir / ("b" + run + ".vff")).string()},
                     {"trace", (dir / ("b" + run + ".csv")).string()}};
    std::ostringstream sink;
    app::cmd_edit(app::resolve_run_config(layer), sink);
  }
  for (const char* ext : {".png", ".vff", ".csv"}) {
    const auto a = read_bytes(dir / (std::string("b1") + ext));
    const auto b = read_bytes(dir / (std::string("b2") + ext));
    o.check(!a.empty() && a == b, std::string(ext + 1) + " byte-identical (" + std::to_string(a.size()) + " bytes)");
  }
}

struct Criterion {
  const char* name;
  std::function<void(Outcome&)> run;
};

}  // namespace
}  // namespace flowedit::testing

int main() {
  using namespace flowedit::testing;
  const std::vector<Criterion> criteria{
      {"gradient suite", gradient_suite},
      {"structural constants", structural_constants},
      {"warp oracles", warp_oracles},
      {"loss closed forms", loss_closed_forms},
      {"synthetic recovery", synthetic_recovery},
      {"representation ordering", representation_ordering},
      {"homography suite", homography_suite},
      {"one-shot toy suite", oneshot_suite},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      criteria[i].run(o);
    } catch (const std::exception& e) {
      o.check(false, std::string("threw: ") + e.what());
    }
    std::string detail = o.detail.str();
    if (detail.size() >= 2) detail.resize(detail.size() - 2);
    std::printf("%s [%zu] %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
