#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "flowedit/warp.hpp"

namespace flowedit {

namespace {

// Middlebury color wheel: red-yellow-green-cyan-blue-magenta segments with
// the classic 15/6/4/11/13/6 sampling.
std::vector<std::array<float, 3>> color_wheel() {
  constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
  std::vector<std::array<float, 3>> wheel;
  for (int i = 0; i < RY; ++i) wheel.push_back({1.0f, static_cast<float>(i) / RY, 0.0f});
  for (int i = 0; i < YG; ++i) wheel.push_back({1.0f - static_cast<float>(i) / YG, 1.0f, 0.0f});
  for (int i = 0; i < GC; ++i) wheel.push_back({0.0f, 1.0f, static_cast<float>(i) / GC});
  for (int i = 0; i < CB; ++i) wheel.push_back({0.0f, 1.0f - static_cast<float>(i) / CB, 1.0f});
  for (int i = 0; i < BM; ++i) wheel.push_back({static_cast<float>(i) / BM, 0.0f, 1.0f});
  for (int i = 0; i < MR; ++i) wheel.push_back({1.0f, 0.0f, 1.0f - static_cast<float>(i) / MR});
  return wheel;
}

}  // namespace

Image visualize_flow(const SpatialFlowField& flow, float max_magnitude) {
  static const auto wheel = color_wheel();
  const int ncols = static_cast<int>(wheel.size());
  if (max_magnitude <= 0.0f) {
    for (int y = 0; y < flow.height; ++y) {
      for (int x = 0; x < flow.width; ++x) {
        max_magnitude = std::max(max_magnitude, std::hypot(flow.at(y, x, 0), flow.at(y, x, 1)));
      }
    }
  }
  const float norm = max_magnitude > 0.0f ? max_magnitude : 1.0f;
  Image out(flow.height, flow.width);
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      const float u = flow.at(y, x, 0) / norm;
      const float v = flow.at(y, x, 1) / norm;
      const float rad = std::min(std::hypot(u, v), 1.0f);
      const float angle = std::atan2(-v, -u) / std::numbers::pi_v<float>;
      const float fk = (angle + 1.0f) / 2.0f * static_cast<float>(ncols - 1);
      const int k0 = static_cast<int>(std::floor(fk));
      const int k1 = (k0 + 1) % ncols;
      const float f = fk - static_cast<float>(k0);
      for (int c = 0; c < 3; ++c) {
        const float col = (1.0f - f) * wheel[k0][c] + f * wheel[k1][c];
        out.at(y, x, c) = 1.0f - rad * (1.0f - col);
      }
    }
  }
  return out;
}

}  // namespace flowedit
