#pragma once

#include <cstdint>
#include <vector>

#include "flowedit/optimize.hpp"
#include "flowedit/video.hpp"

namespace flowedit::testing {

std::vector<Point2> random_points(int n, std::uint64_t seed, double lo = 4.0, double hi = 60.0);

/// Applies `h` with an explicit projective divide, independent of Homography::apply.
std::vector<Point2> map_points(const Homography& h, const std::vector<Point2>& pts);

/// Mild random perspective transform around the identity.
Homography random_homography(std::uint64_t seed);

// Smooth frame-0 field with both components varying.
SpatialFlowField wavy_flow(int h, int w);
ColorFlowField wavy_color(int h, int w);

/// `base` moved `step` pixels right per frame.
LandmarkTrack shifted_track(const std::vector<Point2>& base, int frames, int step);

/// Short explicit-mode edit settings for video tests.
EditConfig quick_config();

}  // namespace flowedit::testing
