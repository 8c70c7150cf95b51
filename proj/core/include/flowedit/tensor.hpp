#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace flowedit {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tensor;

// Called once per backward pass with the op's output; it reads the output
// gradient from `self.grad()` and accumulates into its parents.
using BackwardFn = std::function<void(const Tensor& self)>;

namespace detail {
struct Node;
}

/// Handle to a node in a reverse-mode autodiff graph.
///
/// Copies share the underlying node. Data is dense float32, row-major.
/// Results of ops on tensors that require grad record their parents; leaves
/// have no parents and accumulate gradients across `backward` calls until
/// `zero_grad` is called.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  explicit operator bool() const { return node_ != nullptr; }

  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int dim(int axis) const;
  std::size_t size() const;

  std::span<const float> data() const;
  // Mutating a tensor that is already part of a recorded graph invalidates
  // that graph's gradients; intended for leaves between optimizer steps.
  std::span<float> mutable_data();
  float item() const;
  float at(std::size_t i) const { return data()[i]; }
  std::vector<float> to_vector() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool is_leaf() const;
  std::string_view op_name() const;

  bool has_grad() const;
  std::span<const float> grad() const;
  // Gradient buffer for accumulation, allocated on first use; empty when the
  // tensor does not require grad.
  std::span<float> grad_sink() const;
  void zero_grad();

  // Same values, no history, requires_grad = false.
  Tensor detach() const;

  const std::vector<Tensor>& parents() const;

  // Builds an op result. When no parent requires grad the history is
  // dropped and `fn` is never called.
  static Tensor make_result(std::string_view op, Shape shape, std::vector<float> values,
                            std::vector<Tensor> parents, BackwardFn fn);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend void backward(const Tensor& loss);

  std::shared_ptr<detail::Node> node_;
};

/// Reverse-mode sweep from a scalar `loss`. Leaf gradients accumulate; the
/// gradients of intermediate nodes are reset at the start of every call.
void backward(const Tensor& loss);

// Elementwise. Operands must have equal shapes, or one of them must hold a
// single element, which is broadcast.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, float factor);
Tensor add_scalar(const Tensor& a, float value);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor clamp(const Tensor& a, float lo, float hi);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);
Tensor operator*(float s, const Tensor& a);
Tensor operator*(const Tensor& a, float s);

// [m, k] x [k, n] -> [m, n]
Tensor matmul(const Tensor& a, const Tensor& b);
// x [n, d] + bias [d], bias broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor transpose(const Tensor& a);  // rank 2
Tensor permute(const Tensor& a, std::vector<int> axes);

// Full reductions to shape [1].
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
// Contiguous range [start, start + length) along `axis`.
Tensor narrow(const Tensor& a, int axis, int start, int length);

Tensor softmax(const Tensor& a);  // over the last axis
// Cosine of the angle between two tensors viewed as flat vectors.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

}  // namespace flowedit
