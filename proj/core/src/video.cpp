#include "flowedit/video.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "flowedit/errors.hpp"
#include "flowedit/warp.hpp"

namespace flowedit {

namespace {

// Border-clamped bilinear lookup of channel c of an H x W x C field.
template <int C>
double sample(const Field<C>& f, double x, double y, int c) {
  const int w = f.width, h = f.height;
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = std::min(static_cast<int>(std::floor(x)), std::max(w - 2, 0));
  const int y0 = std::min(static_cast<int>(std::floor(y)), std::max(h - 2, 0));
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double ax = x - x0, ay = y - y0;
  return (1 - ay) * ((1 - ax) * f.at(y0, x0, c) + ax * f.at(y0, x1, c)) +
         ay * ((1 - ax) * f.at(y1, x0, c) + ax * f.at(y1, x1, c));
}

}  // namespace

void propagate_flow(const SpatialFlowField& flow0, const ColorFlowField& cflow0, const Homography& h,
                    SpatialFlowField& flow_k, ColorFlowField& cflow_k) {
  if (cflow0.height != flow0.height || cflow0.width != flow0.width) {
    throw ShapeError("propagate_flow: spatial and color fields differ in size");
  }
  const Homography inv = h.inverse();
  const int height = flow0.height, width = flow0.width;
  flow_k = SpatialFlowField(height, width);
  cflow_k = ColorFlowField(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Point2 q = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      const double u = sample(flow0, q.x, q.y, 0);
      const double v = sample(flow0, q.x, q.y, 1);
      const auto j = h.jacobian(q);
      flow_k.at(y, x, 0) = static_cast<float>(j[0] * u + j[1] * v);
      flow_k.at(y, x, 1) = static_cast<float>(j[2] * u + j[3] * v);
      cflow_k.at(y, x, 0) = static_cast<float>(sample(cflow0, q.x, q.y, 0));
    }
  }
}

LandmarkTrack read_landmarks_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open landmark file '" + path.string() + "'");
  LandmarkTrack track;
  std::string line;
  int line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (track.empty() && line_no == 1) continue;
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": non-numeric landmark row");
    }
    if (values.size() % 2 != 0) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": odd number of coordinates");
    }
    if (width == 0) width = values.size();
    if (values.size() != width) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                    " values, got " + std::to_string(values.size()));
    }
    std::vector<Point2> row;
    for (std::size_t i = 0; i < values.size(); i += 2) row.push_back({values[i], values[i + 1]});
    track.push_back(std::move(row));
  }
  return track;
}

void validate_landmarks(const LandmarkTrack& track, int width, int height) {
  if (track.empty()) throw ConfigError("landmarks: empty track");
  const std::size_t n = track.front().size();
  if (n < 4) throw ConfigError("landmarks: need at least 4 points per frame, got " + std::to_string(n));
  for (std::size_t k = 0; k < track.size(); ++k) {
    if (track[k].size() != n) {
      throw ConfigError("landmarks: frame " + std::to_string(k) + " has " + std::to_string(track[k].size()) +
                        " points, frame 0 has " + std::to_string(n));
    }
    for (const Point2& p : track[k]) {
      if (!(p.x >= 0.0 && p.x <= width - 1 && p.y >= 0.0 && p.y <= height - 1)) {
        throw ConfigError("landmarks: frame " + std::to_string(k) + " has a point outside the " +
                          std::to_string(width) + "x" + std::to_string(height) + " frame");
      }
    }
  }
}

std::vector<Image> propagate_edit(const std::vector<Image>& frames, const LandmarkTrack& landmarks,
                                  const SpatialFlowField& flow0, const ColorFlowField& cflow0) {
  if (frames.size() != landmarks.size()) {
    throw ConfigError("video: " + std::to_string(frames.size()) + " frames but " + std::to_string(landmarks.size()) +
                      " landmark rows");
  }
  if (frames.empty()) return {};
  for (const Image& f : frames) {
    if (f.height != flow0.height || f.width != flow0.width) throw ConfigError("video: frame sizes differ");
  }
  validate_landmarks(landmarks, flow0.width, flow0.height);
  std::vector<Image> out;
  out.reserve(frames.size());
  out.push_back(warp_image(frames[0], flow0, cflow0));
  SpatialFlowField fk;
  ColorFlowField ck;
  for (std::size_t k = 1; k < frames.size(); ++k) {
    Homography h;
    try {
      h = estimate_homography(landmarks[0], landmarks[k]);
    } catch (const std::exception& e) {
      throw ConfigError("video: frame " + std::to_string(k) + ": " + e.what());
    }
    propagate_flow(flow0, cflow0, h, fk, ck);
    out.push_back(warp_image(frames[k], fk, ck));
  }
  return out;
}

VideoEditResult edit_video(const std::vector<Image>& frames, const LandmarkTrack& landmarks, std::string_view prompt,
                           const EditConfig& config, GuidanceScorer& scorer, IdentityEmbedder* identity) {
  if (frames.empty()) throw ConfigError("video: no frames");
  if (frames.size() != landmarks.size()) {
    throw ConfigError("video: " + std::to_string(frames.size()) + " frames but " + std::to_string(landmarks.size()) +
                      " landmark rows");
  }
  validate_landmarks(landmarks, frames[0].width, frames[0].height);
  VideoEditResult r;
  r.first = run_iterative(frames[0], prompt, config, scorer, identity);
  r.frames = propagate_edit(frames, landmarks, r.first.flow, r.first.cflow);
  return r;
}

std::string frame_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06d.png", index);
  return buf;
}

std::vector<Image> read_frames(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("'" + dir.string() + "' is not a directory");
  std::vector<std::pair<int, std::filesystem::path>> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    int index = 0;
    char tail[8] = {};
    if (name.size() == 16 && std::sscanf(name.c_str(), "frame_%6d.%3s", &index, tail) == 2 &&
        std::string_view(tail) == "png") {
      files.emplace_back(index, entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<Image> frames;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (files[i].first != static_cast<int>(i)) {
      throw IoError("'" + dir.string() + "': missing " + frame_name(static_cast<int>(i)));
    }
    frames.push_back(read_png(files[i].second));
  }
  if (frames.empty()) throw IoError("'" + dir.string() + "' contains no frame_%06d.png files");
  return frames;
}

void write_frames(const std::filesystem::path& dir, const std::vector<Image>& frames) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  for (std::size_t i = 0; i < frames.size(); ++i) write_png(dir / frame_name(static_cast<int>(i)), frames[i]);
}

}  // namespace flowedit
