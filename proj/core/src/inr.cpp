#include "flowedit/inr.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "binary_io.hpp"
#include "flowedit/errors.hpp"

namespace flowedit {

std::size_t InrArchitecture::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) n += static_cast<std::size_t>(dims[i]) * dims[i + 1] + dims[i + 1];
  return n;
}

void InrArchitecture::validate() const {
  if (encoding_levels < 0) throw ConfigError("INR: encoding levels must be >= 0");
  if (dims.size() < 2) throw ConfigError("INR: need at least input and output widths");
  for (int d : dims) {
    if (d <= 0) throw ConfigError("INR: layer widths must be positive");
  }
  if (dims.front() != encoded_size(encoding_levels)) {
    throw ConfigError("INR: input width " + std::to_string(dims.front()) + " does not match encoding size " +
                      std::to_string(encoded_size(encoding_levels)) + " for L=" + std::to_string(encoding_levels));
  }
}

InrArchitecture InrArchitecture::spatial_default() { return {4, {18, 32, 32, 2}}; }

InrArchitecture InrArchitecture::color_default() { return {4, {18, 16, 16, 1}}; }

std::vector<float> positional_encode(float x, float y, int levels) {
  std::vector<float> out;
  out.reserve(encoded_size(levels));
  for (float p : {x, y}) {
    out.push_back(p);
    for (int l = 0; l < levels; ++l) {
      const double arg = std::ldexp(std::numbers::pi, l) * p;
      out.push_back(static_cast<float>(std::sin(arg)));
      out.push_back(static_cast<float>(std::cos(arg)));
    }
  }
  return out;
}

Tensor normalized_grid(int height, int width) {
  std::vector<float> v(static_cast<std::size_t>(height) * width * 2);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 2;
      v[i] = (2.0f * static_cast<float>(x) + 1.0f) / static_cast<float>(width) - 1.0f;
      v[i + 1] = (2.0f * static_cast<float>(y) + 1.0f) / static_cast<float>(height) - 1.0f;
    }
  }
  return Tensor::from({height, width, 2}, std::move(v));
}

Tensor encode_grid(const Tensor& grid, int levels) {
  if (grid.rank() != 3 || grid.dim(2) != 2) {
    throw ShapeError("inr: expected H x W x 2 coordinate grid, got " + to_string(grid.shape()));
  }
  const int n = grid.dim(0) * grid.dim(1);
  const int e = encoded_size(levels);
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(n) * e);
  auto g = grid.data();
  for (int i = 0; i < n; ++i) {
    auto enc = positional_encode(g[2 * i], g[2 * i + 1], levels);
    out.insert(out.end(), enc.begin(), enc.end());
  }
  return Tensor::from({n, e}, std::move(out));
}

Tensor inr_forward_encoded(const InrArchitecture& arch, const Tensor& params, const Tensor& encoded, int height,
                           int width, float output_scale) {
  if (params.size() != arch.parameter_count()) {
    throw ShapeError("inr: expected " + std::to_string(arch.parameter_count()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  if (encoded.rank() != 2 || encoded.dim(1) != arch.dims.front() ||
      encoded.dim(0) != height * width) {
    throw ShapeError("inr: encoded grid " + to_string(encoded.shape()) + " does not match architecture input " +
                     std::to_string(arch.dims.front()));
  }
  Tensor flat = params.rank() == 1 ? params : reshape(params, {static_cast<int>(params.size())});
  Tensor h = encoded;
  int offset = 0;
  for (int l = 0; l < arch.layer_count(); ++l) {
    const int in = arch.dims[l], out = arch.dims[l + 1];
    Tensor w = reshape(narrow(flat, 0, offset, in * out), {in, out});
    offset += in * out;
    Tensor b = narrow(flat, 0, offset, out);
    offset += out;
    h = add_bias(matmul(h, w), b);
    if (l + 1 < arch.layer_count()) h = relu(h);
  }
  h = reshape(h, {height, width, arch.output_channels()});
  return output_scale == 1.0f ? h : scale(h, output_scale);
}

Tensor inr_forward(const InrField& field, const Tensor& grid, float output_scale) {
  Tensor encoded = encode_grid(grid, field.arch.encoding_levels);
  return inr_forward_encoded(field.arch, field.params, encoded, grid.dim(0), grid.dim(1), output_scale);
}

InrField init_params(const InrArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 rng(seed);
  std::vector<float> values;
  values.reserve(arch.parameter_count());
  for (int l = 0; l < arch.layer_count(); ++l) {
    const int in = arch.dims[l], out = arch.dims[l + 1];
    const bool last = l + 1 == arch.layer_count();
    const float bound = std::sqrt(6.0f / static_cast<float>(in + out));
    std::uniform_real_distribution<float> dist(-bound, bound);
    for (int i = 0; i < in * out; ++i) values.push_back(last ? 0.0f : dist(rng));
    for (int i = 0; i < out; ++i) values.push_back(0.0f);
  }
  const int n = static_cast<int>(values.size());
  return {arch, Tensor::from({n}, std::move(values), true)};
}

std::vector<float> flatten_params(const InrField& field) { return field.params.to_vector(); }

InrField unflatten_params(const InrArchitecture& arch, std::span<const float> values) {
  arch.validate();
  if (values.size() != arch.parameter_count()) {
    throw ShapeError("unflatten_params: expected " + std::to_string(arch.parameter_count()) + " values, got " +
                     std::to_string(values.size()));
  }
  const int n = static_cast<int>(values.size());
  return {arch, Tensor::from({n}, std::vector<float>(values.begin(), values.end()), true)};
}

void save_inr(const std::filesystem::path& path, const InrField& field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write("INR1", 4);
  detail::put_u32(out, static_cast<std::uint32_t>(field.arch.encoding_levels));
  detail::put_u32(out, static_cast<std::uint32_t>(field.arch.dims.size()));
  for (int d : field.arch.dims) detail::put_u32(out, static_cast<std::uint32_t>(d));
  for (float v : field.params.data()) detail::put_f32(out, v);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

InrField load_inr(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "INR1") {
    throw IoError("'" + path.string() + "' is not an INR1 checkpoint");
  }
  InrArchitecture arch;
  arch.encoding_levels = static_cast<int>(detail::get_u32(in, "INR1"));
  const std::uint32_t count = detail::get_u32(in, "INR1");
  if (count < 2 || count > 64) throw IoError("INR1: implausible layer count " + std::to_string(count));
  for (std::uint32_t i = 0; i < count; ++i) arch.dims.push_back(static_cast<int>(detail::get_u32(in, "INR1")));
  try {
    arch.validate();
  } catch (const ConfigError& e) {
    throw IoError(std::string("INR1: ") + e.what());
  }
  std::vector<float> values(arch.parameter_count());
  for (float& v : values) v = detail::get_f32(in, "INR1");
  return unflatten_params(arch, values);
}

}  // namespace flowedit
