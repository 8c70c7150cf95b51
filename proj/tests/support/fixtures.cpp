#include "fixtures.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

#include <unistd.h>

namespace flowedit::testing {

Image smooth_image(int height, int width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 6.283185307179586);
  Image img(height, width);
  double ph[3][2];
  for (auto& p : ph) {
    p[0] = phase(rng);
    p[1] = phase(rng);
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = 0.5 + 0.2 * std::sin(x / (6.0 + 2.0 * c) + ph[c][0]) +
                         0.2 * std::cos(y / (7.0 + 1.5 * c) + ph[c][1]);
        img.at(y, x, c) = static_cast<float>(v);
      }
    }
  }
  return img;
}

Image shift_image(const Image& in, int dx, int dy) {
  Image out(in.height, in.width);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      const int sx = std::clamp(x + dx, 0, in.width - 1);
      const int sy = std::clamp(y + dy, 0, in.height - 1);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = in.at(sy, sx, c);
    }
  }
  return out;
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("flowedit-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace flowedit::testing
