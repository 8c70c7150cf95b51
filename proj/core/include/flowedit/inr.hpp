#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "flowedit/tensor.hpp"

namespace flowedit {

/// Length of the sinusoidal encoding of a 2-D point: 2 * (1 + 2L).
constexpr int encoded_size(int levels) { return 2 * (1 + 2 * levels); }

/// Layer widths of a coordinate MLP plus its input encoding depth.
struct InrArchitecture {
  int encoding_levels = 4;
  std::vector<int> dims;  // input, hidden..., output

  int output_channels() const { return dims.back(); }
  int layer_count() const { return static_cast<int>(dims.size()) - 1; }
  std::size_t parameter_count() const;
  // Throws ConfigError when dims are empty, non-positive or the input width
  // differs from encoded_size(encoding_levels).
  void validate() const;

  static InrArchitecture spatial_default();  // L = 4, [18, 32, 32, 2]
  static InrArchitecture color_default();    // L = 4, [18, 16, 16, 1]

  bool operator==(const InrArchitecture&) const = default;
};

/// An implicit field: architecture plus flat parameters laid out layer by
/// layer, each as a row-major [in x out] weight matrix followed by its bias.
struct InrField {
  InrArchitecture arch;
  Tensor params;  // shape [parameter_count]
};

/// gamma(p) per coordinate, concatenated for x then y:
/// (p, sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^(L-1) pi p), cos(2^(L-1) pi p)).
std::vector<float> positional_encode(float x, float y, int levels);

/// H x W x 2 grid of pixel centers mapped to [-1, 1]^2.
Tensor normalized_grid(int height, int width);

/// Encodes an H x W x 2 normalized grid to a constant [H*W, encoded_size(L)] matrix.
Tensor encode_grid(const Tensor& grid, int levels);

/// Evaluates the MLP (relu hidden layers, linear output) on an encoded grid
/// and returns an H x W x C field multiplied by `output_scale`.
Tensor inr_forward_encoded(const InrArchitecture& arch, const Tensor& params, const Tensor& encoded, int height,
                           int width, float output_scale = 1.0f);

/// Same, starting from an H x W x 2 normalized grid.
Tensor inr_forward(const InrField& field, const Tensor& grid, float output_scale = 1.0f);

/// Xavier-uniform hidden layers, zero biases, zero final layer (the field
/// starts identically zero). Deterministic per seed.
InrField init_params(const InrArchitecture& arch, std::uint64_t seed);

std::vector<float> flatten_params(const InrField& field);
InrField unflatten_params(const InrArchitecture& arch, std::span<const float> values);

// "INR1", u32 L, u32 number of dims, u32 dims..., then the flat parameters
// as little-endian float32. Throws IoError.
void save_inr(const std::filesystem::path& path, const InrField& field);
InrField load_inr(const std::filesystem::path& path);

}  // namespace flowedit
