#include "flowedit/image_ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace flowedit {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ShapeError(msg); }

struct ConvGeometry {
  int channels, height, width;
  int out_channels, ksize, stride, padding;
  int out_h, out_w;
  int patch() const { return channels * ksize * ksize; }
  int pixels() const { return out_h * out_w; }
};

// col[(c*K + ky)*K + kx, oy*out_w + ox] = in[c, oy*s - p + ky, ox*s - p + kx]
void im2col(const ConvGeometry& g, const float* in, float* col) {
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.ksize; ++ky) {
      for (int kx = 0; kx < g.ksize; ++kx) {
        float* row = col + static_cast<std::size_t>((c * g.ksize + ky) * g.ksize + kx) * g.pixels();
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          float* dst = row + static_cast<std::size_t>(oy) * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill_n(dst, g.out_w, 0.0f);
            continue;
          }
          const float* src = in + (static_cast<std::size_t>(c) * g.height + iy) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const float* col, float* in) {
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.ksize; ++ky) {
      for (int kx = 0; kx < g.ksize; ++kx) {
        const float* row = col + static_cast<std::size_t>((c * g.ksize + ky) * g.ksize + kx) * g.pixels();
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          const float* src = row + static_cast<std::size_t>(oy) * g.out_w;
          float* dst = in + (static_cast<std::size_t>(c) * g.height + iy) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

Tensor conv2d_impl(const Tensor& input, const Tensor& kernel, const Tensor* bias, int stride, int padding) {
  if (input.rank() != 3 || kernel.rank() != 4) {
    fail("conv2d: expected C x H x W input and O x C x K x K kernel, got " + to_string(input.shape()) + " and " +
         to_string(kernel.shape()));
  }
  if (kernel.dim(1) != input.dim(0)) {
    fail("conv2d: channel mismatch, input " + to_string(input.shape()) + " vs kernel " + to_string(kernel.shape()));
  }
  if (kernel.dim(2) != kernel.dim(3) || kernel.dim(2) % 2 == 0) fail("conv2d: kernel must be square with odd size");
  if (stride != 1 && stride != 2) fail("conv2d: stride must be 1 or 2");
  if (padding < 0) fail("conv2d: negative padding");

  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), kernel.dim(0), kernel.dim(2), stride, padding, 0, 0};
  g.out_h = (g.height + 2 * padding - g.ksize) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.ksize) / stride + 1;
  if (g.out_h <= 0 || g.out_w <= 0) fail("conv2d: kernel larger than padded input " + to_string(input.shape()));
  if (bias && bias->size() != static_cast<std::size_t>(g.out_channels)) {
    fail("conv2d: bias " + to_string(bias->shape()) + " does not match " + std::to_string(g.out_channels) + " outputs");
  }

  const std::size_t P = g.pixels();
  auto col = std::make_shared<std::vector<float>>(static_cast<std::size_t>(g.patch()) * P);
  im2col(g, input.data().data(), col->data());

  std::vector<float> out(static_cast<std::size_t>(g.out_channels) * P, 0.0f);
  const float* K = kernel.data().data();
  for (int o = 0; o < g.out_channels; ++o) {
    float* dst = out.data() + o * P;
    if (bias) std::fill_n(dst, P, bias->data()[o]);
    const float* krow = K + static_cast<std::size_t>(o) * g.patch();
    for (int q = 0; q < g.patch(); ++q) {
      const float kv = krow[q];
      if (kv == 0.0f) continue;
      const float* src = col->data() + q * P;
      for (std::size_t p = 0; p < P; ++p) dst[p] += kv * src[p];
    }
  }

  std::vector<Tensor> parents{input, kernel};
  if (bias) parents.push_back(*bias);
  return Tensor::make_result(
      "conv2d", {g.out_channels, g.out_h, g.out_w}, std::move(out), parents,
      [input, kernel, parents, g, col, P](const Tensor& self) {
        const float* go = self.grad().data();
        if (auto gk = kernel.grad_sink(); !gk.empty()) {
          for (int o = 0; o < g.out_channels; ++o) {
            const float* grow = go + o * P;
            for (int q = 0; q < g.patch(); ++q) {
              const float* src = col->data() + q * P;
              float acc = 0.0f;
              for (std::size_t p = 0; p < P; ++p) acc += grow[p] * src[p];
              gk[static_cast<std::size_t>(o) * g.patch() + q] += acc;
            }
          }
        }
        if (parents.size() == 3) {
          if (auto gb = parents[2].grad_sink(); !gb.empty()) {
            for (int o = 0; o < g.out_channels; ++o) {
              float acc = 0.0f;
              for (std::size_t p = 0; p < P; ++p) acc += go[o * P + p];
              gb[o] += acc;
            }
          }
        }
        if (auto gi = input.grad_sink(); !gi.empty()) {
          std::vector<float> gcol(static_cast<std::size_t>(g.patch()) * P, 0.0f);
          const float* K = kernel.data().data();
          for (int o = 0; o < g.out_channels; ++o) {
            const float* grow = go + o * P;
            const float* krow = K + static_cast<std::size_t>(o) * g.patch();
            for (int q = 0; q < g.patch(); ++q) {
              const float kv = krow[q];
              if (kv == 0.0f) continue;
              float* dst = gcol.data() + q * P;
              for (std::size_t p = 0; p < P; ++p) dst[p] += kv * grow[p];
            }
          }
          col2im(g, gcol.data(), gi.data());
        }
      });
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
  return conv2d_impl(input, kernel, nullptr, stride, padding);
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride, int padding) {
  return conv2d_impl(input, kernel, &bias, stride, padding);
}

Tensor nearest_upsample(const Tensor& input, int factor) {
  if (input.rank() != 3) fail("nearest_upsample: expected C x H x W, got " + to_string(input.shape()));
  if (factor < 2) fail("nearest_upsample: factor must be >= 2");
  const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const int OH = H * factor, OW = W * factor;
  auto A = input.data();
  std::vector<float> out(static_cast<std::size_t>(C) * OH * OW);
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < OH; ++y) {
      const float* src = A.data() + (static_cast<std::size_t>(c) * H + y / factor) * W;
      float* dst = out.data() + (static_cast<std::size_t>(c) * OH + y) * OW;
      for (int x = 0; x < OW; ++x) dst[x] = src[x / factor];
    }
  }
  return Tensor::make_result("nearest_upsample", {C, OH, OW}, std::move(out), {input},
                             [input, C, H, W, OH, OW, factor](const Tensor& self) {
                               auto gi = input.grad_sink();
                               auto g = self.grad();
                               for (int c = 0; c < C; ++c) {
                                 for (int y = 0; y < OH; ++y) {
                                   float* dst = gi.data() + (static_cast<std::size_t>(c) * H + y / factor) * W;
                                   const float* src = g.data() + (static_cast<std::size_t>(c) * OH + y) * OW;
                                   for (int x = 0; x < OW; ++x) dst[x / factor] += src[x];
                                 }
                               }
                             });
}

namespace {

struct BilinearTap {
  int x0, x1, y0, y1;
  float wx, wy;
  bool x_inside, y_inside;  // false when the coordinate was clamped
};

BilinearTap bilinear_tap(float x, float y, int W, int H) {
  BilinearTap t{};
  const float mx = static_cast<float>(W - 1);
  const float my = static_cast<float>(H - 1);
  t.x_inside = x >= 0.0f && x <= mx;
  t.y_inside = y >= 0.0f && y <= my;
  x = std::clamp(x, 0.0f, mx);
  y = std::clamp(y, 0.0f, my);
  // On the last row/column use the cell to the left/above with weight 1 so
  // the one-sided derivative still points into the image.
  t.x0 = std::min(static_cast<int>(std::floor(x)), std::max(W - 2, 0));
  t.y0 = std::min(static_cast<int>(std::floor(y)), std::max(H - 2, 0));
  t.wx = x - static_cast<float>(t.x0);
  t.wy = y - static_cast<float>(t.y0);
  t.x1 = std::min(t.x0 + 1, W - 1);
  t.y1 = std::min(t.y0 + 1, H - 1);
  return t;
}

}  // namespace

Tensor grid_sample_bilinear(const Tensor& image, const Tensor& coords) {
  if (image.rank() != 3) fail("grid_sample_bilinear: expected H x W x C image, got " + to_string(image.shape()));
  if (coords.rank() != 3 || coords.dim(2) != 2) {
    fail("grid_sample_bilinear: expected H x W x 2 coordinates, got " + to_string(coords.shape()));
  }
  const int H = image.dim(0), W = image.dim(1), C = image.dim(2);
  const int OH = coords.dim(0), OW = coords.dim(1);
  auto I = image.data();
  auto P = coords.data();
  std::vector<float> out(static_cast<std::size_t>(OH) * OW * C);
  for (std::size_t p = 0; p < static_cast<std::size_t>(OH) * OW; ++p) {
    const BilinearTap t = bilinear_tap(P[2 * p], P[2 * p + 1], W, H);
    const float* v00 = I.data() + (static_cast<std::size_t>(t.y0) * W + t.x0) * C;
    const float* v01 = I.data() + (static_cast<std::size_t>(t.y0) * W + t.x1) * C;
    const float* v10 = I.data() + (static_cast<std::size_t>(t.y1) * W + t.x0) * C;
    const float* v11 = I.data() + (static_cast<std::size_t>(t.y1) * W + t.x1) * C;
    for (int c = 0; c < C; ++c) {
      const float top = v00[c] * (1.0f - t.wx) + v01[c] * t.wx;
      const float bot = v10[c] * (1.0f - t.wx) + v11[c] * t.wx;
      out[p * C + c] = top * (1.0f - t.wy) + bot * t.wy;
    }
  }
  return Tensor::make_result(
      "grid_sample_bilinear", {OH, OW, C}, std::move(out), {image, coords},
      [image, coords, H, W, C, OH, OW](const Tensor& self) {
        auto g = self.grad();
        auto I = image.data();
        auto P = coords.data();
        auto gi = image.grad_sink();
        auto gc = coords.grad_sink();
        for (std::size_t p = 0; p < static_cast<std::size_t>(OH) * OW; ++p) {
          const BilinearTap t = bilinear_tap(P[2 * p], P[2 * p + 1], W, H);
          const std::size_t i00 = (static_cast<std::size_t>(t.y0) * W + t.x0) * C;
          const std::size_t i01 = (static_cast<std::size_t>(t.y0) * W + t.x1) * C;
          const std::size_t i10 = (static_cast<std::size_t>(t.y1) * W + t.x0) * C;
          const std::size_t i11 = (static_cast<std::size_t>(t.y1) * W + t.x1) * C;
          float dx = 0.0f, dy = 0.0f;
          for (int c = 0; c < C; ++c) {
            const float go = g[p * C + c];
            if (!gi.empty()) {
              gi[i00 + c] += go * (1.0f - t.wx) * (1.0f - t.wy);
              gi[i01 + c] += go * t.wx * (1.0f - t.wy);
              gi[i10 + c] += go * (1.0f - t.wx) * t.wy;
              gi[i11 + c] += go * t.wx * t.wy;
            }
            dx += go * ((I[i01 + c] - I[i00 + c]) * (1.0f - t.wy) + (I[i11 + c] - I[i10 + c]) * t.wy);
            dy += go * ((I[i10 + c] - I[i00 + c]) * (1.0f - t.wx) + (I[i11 + c] - I[i01 + c]) * t.wx);
          }
          if (!gc.empty()) {
            if (t.x_inside) gc[2 * p] += dx;
            if (t.y_inside) gc[2 * p + 1] += dy;
          }
        }
      });
}

Tensor identity_grid(int height, int width) {
  std::vector<float> v(static_cast<std::size_t>(height) * width * 2);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 2;
      v[i] = static_cast<float>(x);
      v[i + 1] = static_cast<float>(y);
    }
  }
  return Tensor::from({height, width, 2}, std::move(v));
}

std::vector<float> gaussian_kernel(int kernel_size, float sigma) {
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw std::invalid_argument("gaussian kernel size must be odd and positive, got " + std::to_string(kernel_size));
  }
  if (sigma <= 0.0f) sigma = static_cast<float>(kernel_size) / 6.0f;
  const int r = kernel_size / 2;
  std::vector<double> w(kernel_size);
  double total = 0.0;
  for (int i = -r; i <= r; ++i) {
    w[i + r] = std::exp(-0.5 * (static_cast<double>(i) * i) / (static_cast<double>(sigma) * sigma));
    total += w[i + r];
  }
  std::vector<float> taps(kernel_size);
  for (int i = 0; i < kernel_size; ++i) taps[i] = static_cast<float>(w[i] / total);
  return taps;
}

namespace {

// One separable pass along rows (axis 1, x) or columns (axis 0, y) of an
// H x W x C field; indices clamp to the border.
Tensor blur_pass(const Tensor& field, std::shared_ptr<const std::vector<float>> taps, int axis) {
  const int H = field.dim(0), W = field.dim(1), C = field.dim(2);
  const int r = static_cast<int>(taps->size()) / 2;
  auto A = field.data();
  auto index = [H, W, C, axis](int y, int x, int t, int c) {
    if (axis == 1) x = std::clamp(x + t, 0, W - 1);
    else y = std::clamp(y + t, 0, H - 1);
    return (static_cast<std::size_t>(y) * W + x) * C + c;
  };
  std::vector<float> out(A.size(), 0.0f);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < C; ++c) {
        float acc = 0.0f;
        for (int t = -r; t <= r; ++t) acc += (*taps)[t + r] * A[index(y, x, t, c)];
        out[(static_cast<std::size_t>(y) * W + x) * C + c] = acc;
      }
    }
  }
  return Tensor::make_result(axis == 1 ? "blur_x" : "blur_y", field.shape(), std::move(out), {field},
                             [field, taps, H, W, C, r, index](const Tensor& self) {
                               auto gi = field.grad_sink();
                               auto g = self.grad();
                               for (int y = 0; y < H; ++y) {
                                 for (int x = 0; x < W; ++x) {
                                   for (int c = 0; c < C; ++c) {
                                     const float go = g[(static_cast<std::size_t>(y) * W + x) * C + c];
                                     for (int t = -r; t <= r; ++t) gi[index(y, x, t, c)] += (*taps)[t + r] * go;
                                   }
                                 }
                               }
                             });
}

}  // namespace

Tensor gaussian_blur(const Tensor& field, int kernel_size, float sigma) {
  if (field.rank() != 3) fail("gaussian_blur: expected H x W x C field, got " + to_string(field.shape()));
  auto taps = std::make_shared<const std::vector<float>>(gaussian_kernel(kernel_size, sigma));
  if (kernel_size == 1) return field;
  return blur_pass(blur_pass(field, taps, 1), taps, 0);
}

Tensor adaptive_avg_pool(const Tensor& image, int out_h, int out_w) {
  if (image.rank() != 3) fail("adaptive_avg_pool: expected H x W x C, got " + to_string(image.shape()));
  if (out_h < 1 || out_w < 1) fail("adaptive_avg_pool: output size must be positive");
  const int H = image.dim(0), W = image.dim(1), C = image.dim(2);
  struct Cell {
    int y0, y1, x0, x1;
  };
  auto cells = std::make_shared<std::vector<Cell>>();
  cells->reserve(static_cast<std::size_t>(out_h) * out_w);
  for (int i = 0; i < out_h; ++i) {
    for (int j = 0; j < out_w; ++j) {
      cells->push_back({(i * H) / out_h, ((i + 1) * H + out_h - 1) / out_h, (j * W) / out_w,
                        ((j + 1) * W + out_w - 1) / out_w});
    }
  }
  auto A = image.data();
  std::vector<float> out(cells->size() * C, 0.0f);
  for (std::size_t k = 0; k < cells->size(); ++k) {
    const Cell& cell = (*cells)[k];
    const float inv = 1.0f / static_cast<float>((cell.y1 - cell.y0) * (cell.x1 - cell.x0));
    for (int y = cell.y0; y < cell.y1; ++y) {
      for (int x = cell.x0; x < cell.x1; ++x) {
        for (int c = 0; c < C; ++c) out[k * C + c] += A[(static_cast<std::size_t>(y) * W + x) * C + c];
      }
    }
    for (int c = 0; c < C; ++c) out[k * C + c] *= inv;
  }
  return Tensor::make_result("adaptive_avg_pool", {out_h, out_w, C}, std::move(out), {image},
                             [image, cells, W, C](const Tensor& self) {
                               auto gi = image.grad_sink();
                               auto g = self.grad();
                               for (std::size_t k = 0; k < cells->size(); ++k) {
                                 const Cell& cell = (*cells)[k];
                                 const float inv = 1.0f / static_cast<float>((cell.y1 - cell.y0) * (cell.x1 - cell.x0));
                                 for (int y = cell.y0; y < cell.y1; ++y) {
                                   for (int x = cell.x0; x < cell.x1; ++x) {
                                     for (int c = 0; c < C; ++c) {
                                       gi[(static_cast<std::size_t>(y) * W + x) * C + c] += g[k * C + c] * inv;
                                     }
                                   }
                                 }
                               }
                             });
}

}  // namespace flowedit
