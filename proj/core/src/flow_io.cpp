#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "binary_io.hpp"
#include "flowedit/errors.hpp"
#include "flowedit/warp.hpp"

namespace flowedit {

namespace {

constexpr std::array<char, 4> kMagic{'V', 'F', 'F', '1'};

}  // namespace

void write_vff(const std::filesystem::path& path, const RasterField& field) {
  if (field.values.size() != static_cast<std::size_t>(field.height) * field.width * field.channels) {
    throw IoError("VFF1: field values do not match its dimensions");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(kMagic.data(), kMagic.size());
  detail::put_u32(out, static_cast<std::uint32_t>(field.height));
  detail::put_u32(out, static_cast<std::uint32_t>(field.width));
  detail::put_u32(out, static_cast<std::uint32_t>(field.channels));
  for (float v : field.values) detail::put_f32(out, v);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

RasterField read_vff(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw IoError("'" + path.string() + "' is not a VFF1 flow file");
  }
  RasterField f;
  f.height = static_cast<int>(detail::get_u32(in, "VFF1"));
  f.width = static_cast<int>(detail::get_u32(in, "VFF1"));
  f.channels = static_cast<int>(detail::get_u32(in, "VFF1"));
  if (f.height <= 0 || f.width <= 0 || f.channels <= 0) throw IoError("VFF1: invalid dimensions");
  f.values.resize(static_cast<std::size_t>(f.height) * f.width * f.channels);
  for (float& v : f.values) v = detail::get_f32(in, "VFF1");
  return f;
}

RasterField pack_flow(const SpatialFlowField& flow, const ColorFlowField& cflow) {
  if (flow.height != cflow.height || flow.width != cflow.width) throw ShapeError("pack_flow: field sizes differ");
  RasterField f{flow.height, flow.width, 3, {}};
  f.values.reserve(static_cast<std::size_t>(f.height) * f.width * 3);
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      f.values.push_back(flow.at(y, x, 0));
      f.values.push_back(flow.at(y, x, 1));
      f.values.push_back(cflow.at(y, x, 0));
    }
  }
  return f;
}

void unpack_flow(const RasterField& field, SpatialFlowField& flow, ColorFlowField& cflow) {
  if (field.channels != 2 && field.channels != 3) {
    throw IoError("flow file must have 2 or 3 channels, got " + std::to_string(field.channels));
  }
  flow = SpatialFlowField(field.height, field.width);
  cflow = ColorFlowField(field.height, field.width);
  for (int y = 0; y < field.height; ++y) {
    for (int x = 0; x < field.width; ++x) {
      const float* v = field.values.data() + (static_cast<std::size_t>(y) * field.width + x) * field.channels;
      flow.at(y, x, 0) = v[0];
      flow.at(y, x, 1) = v[1];
      if (field.channels == 3) cflow.at(y, x, 0) = v[2];
    }
  }
}

}  // namespace flowedit
