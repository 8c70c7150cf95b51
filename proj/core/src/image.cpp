#include "flowedit/image.hpp"

#include <algorithm>

namespace flowedit {

Image::Image(int h, int w, float fill) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

Tensor Image::tensor(bool requires_grad) const { return Tensor::from({height, width, 3}, pixels, requires_grad); }

Image Image::from_tensor(const Tensor& t) {
  if (t.rank() != 3 || t.dim(2) != 3) throw ShapeError("image: expected H x W x 3, got " + to_string(t.shape()));
  Image img;
  img.height = t.dim(0);
  img.width = t.dim(1);
  img.pixels = t.to_vector();
  for (float& v : img.pixels) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

}  // namespace flowedit
