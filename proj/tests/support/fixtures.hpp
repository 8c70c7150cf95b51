#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flowedit/image.hpp"

namespace flowedit::testing {

/// Smooth multi-frequency RGB pattern in [0.1, 0.9].
Image smooth_image(int height, int width, std::uint64_t seed = 0);

/// out(x, y) = in(x + dx, y + dy), border-clamped; integer shifts only.
Image shift_image(const Image& in, int dx, int dy);

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::vector<unsigned char> read_bytes(const std::filesystem::path& path);

}  // namespace flowedit::testing
