#pragma once

#include <array>
#include <filesystem>
#include <string_view>
#include <vector>

#include "flowedit/guidance.hpp"
#include "flowedit/image.hpp"
#include "flowedit/optimize.hpp"

namespace flowedit {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Row-major 3x3 projective transform with m[8] == 1.
struct Homography {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  Point2 apply(Point2 p) const;
  Homography inverse() const;  // throws std::domain_error when singular
  double determinant() const;
  // d(apply)/d(x, y) at p: {dX/dx, dX/dy, dY/dx, dY/dy}.
  std::array<double, 4> jacobian(Point2 p) const;

  static Homography identity() { return {}; }
};

Homography operator*(const Homography& a, const Homography& b);

/// Normalized DLT over all correspondences. Throws std::invalid_argument for
/// fewer than 4 points and std::domain_error for degenerate configurations.
Homography estimate_homography(const std::vector<Point2>& src, const std::vector<Point2>& dst);

/// Frame-k fields from frame-0 fields: U_k(p) = J_H(q) U_0(q) with
/// q = H^-1(p); the color field is resampled at q.
void propagate_flow(const SpatialFlowField& flow0, const ColorFlowField& cflow0, const Homography& h,
                    SpatialFlowField& flow_k, ColorFlowField& cflow_k);

/// One row per frame of N (x, y) points.
using LandmarkTrack = std::vector<std::vector<Point2>>;

/// CSV rows "x0,y0,x1,y1,..."; an optional non-numeric header row is
/// skipped. Throws IoError on ragged or malformed rows.
LandmarkTrack read_landmarks_csv(const std::filesystem::path& path);

/// Throws ConfigError when the track is ragged, has fewer than 4 points per
/// frame, or leaves the width x height frame.
void validate_landmarks(const LandmarkTrack& track, int width, int height);

/// Warps every frame with fields propagated from frame 0; frame 0 uses the
/// fields unchanged.
std::vector<Image> propagate_edit(const std::vector<Image>& frames, const LandmarkTrack& landmarks,
                                  const SpatialFlowField& flow0, const ColorFlowField& cflow0);

struct VideoEditResult {
  std::vector<Image> frames;
  EditResult first;
};

/// Optimizes fields on frame 0, then propagates them to the other frames.
VideoEditResult edit_video(const std::vector<Image>& frames, const LandmarkTrack& landmarks, std::string_view prompt,
                           const EditConfig& config, GuidanceScorer& scorer, IdentityEmbedder* identity = nullptr);

/// `frame_%06d.png` files of a directory, in index order.
std::vector<Image> read_frames(const std::filesystem::path& dir);
void write_frames(const std::filesystem::path& dir, const std::vector<Image>& frames);
std::string frame_name(int index);

}  // namespace flowedit
