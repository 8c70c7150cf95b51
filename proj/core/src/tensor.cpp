#include "flowedit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace flowedit {

namespace detail {

struct Node {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;
  bool requires_grad = false;
  std::string op;
  std::vector<Tensor> parents;
  BackwardFn backward;
};

}  // namespace detail

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + to_string(shape));
  }
}

[[noreturn]] void mismatch(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0f, requires_grad); }

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  check_shape(shape);
  std::vector<float> values(numel(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
  check_shape(shape);
  if (values.size() != numel(shape)) {
    throw ShapeError("tensor: " + std::to_string(values.size()) + " values do not fill shape " + to_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  node->op = "leaf";
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(float value, bool requires_grad) { return from({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }

int Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
  return node_->shape[axis];
}

std::size_t Tensor::size() const { return node_->data.size(); }

std::span<const float> Tensor::data() const { return node_->data; }

std::span<float> Tensor::mutable_data() { return node_->data; }

float Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor of shape " + to_string(shape()) + " is not a scalar");
  return node_->data[0];
}

std::vector<float> Tensor::to_vector() const { return node_->data; }

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  if (!is_leaf()) throw std::logic_error("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = value;
}

bool Tensor::is_leaf() const { return !node_->backward; }

std::string_view Tensor::op_name() const { return node_->op; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const float> Tensor::grad() const { return node_->grad; }

std::span<float> Tensor::grad_sink() const {
  if (!node_->requires_grad) return {};
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0f);
  return node_->grad;
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0f); }

Tensor Tensor::detach() const { return from(node_->shape, node_->data, false); }

const std::vector<Tensor>& Tensor::parents() const { return node_->parents; }

Tensor Tensor::make_result(std::string_view op, Shape shape, std::vector<float> values,
                           std::vector<Tensor> parents, BackwardFn fn) {
  Tensor out = from(std::move(shape), std::move(values), false);
  out.node_->op = std::string(op);
  const bool needs = std::any_of(parents.begin(), parents.end(), [](const Tensor& p) { return p.requires_grad(); });
  if (needs && fn) {
    out.node_->requires_grad = true;
    out.node_->parents = std::move(parents);
    out.node_->backward = std::move(fn);
  }
  return out;
}

void backward(const Tensor& loss) {
  if (!loss) throw std::invalid_argument("backward: empty tensor");
  if (loss.size() != 1) throw ShapeError("backward: loss must be scalar, got shape " + to_string(loss.shape()));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; the graph is a DAG so `visited` is enough.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node_.get(), 0);
  visited.insert(loss.node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].node_.get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order) {
    if (n->backward) n->grad.assign(n->data.size(), 0.0f);
  }
  auto sink = loss.grad_sink();
  sink[0] += 1.0f;

  // Rebuild owning handles so callbacks can receive a Tensor for `self`.
  std::unordered_map<detail::Node*, std::shared_ptr<detail::Node>> owners;
  owners.emplace(loss.node_.get(), loss.node_);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    for (const Tensor& p : n->parents) owners.emplace(p.node_.get(), p.node_);
    if (n->backward) n->backward(Tensor(owners.at(n)));
  }
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

struct Broadcast {
  std::size_t n;
  bool a_scalar;
  bool b_scalar;
  Shape shape;
};

Broadcast broadcast(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return {a.size(), false, false, a.shape()};
  if (b.size() == 1) return {a.size(), false, true, a.shape()};
  if (a.size() == 1) return {b.size(), true, false, b.shape()};
  mismatch(op, a.shape(), b.shape());
}

// f(x, y) -> value; da/db(x, y, out) -> local partial derivatives.
template <class F, class DA, class DB>
Tensor binary(std::string_view op, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  const Broadcast bc = broadcast(op, a, b);
  auto A = a.data();
  auto B = b.data();
  std::vector<float> out(bc.n);
  for (std::size_t i = 0; i < bc.n; ++i) {
    out[i] = f(A[bc.a_scalar ? 0 : i], B[bc.b_scalar ? 0 : i]);
  }
  return Tensor::make_result(op, bc.shape, std::move(out), {a, b}, [a, b, bc, da, db](const Tensor& self) {
    auto g = self.grad();
    auto y = self.data();
    auto A = a.data();
    auto B = b.data();
    auto ga = a.grad_sink();
    auto gb = b.grad_sink();
    for (std::size_t i = 0; i < bc.n; ++i) {
      const float x = A[bc.a_scalar ? 0 : i];
      const float z = B[bc.b_scalar ? 0 : i];
      if (!ga.empty()) ga[bc.a_scalar ? 0 : i] += g[i] * da(x, z, y[i]);
      if (!gb.empty()) gb[bc.b_scalar ? 0 : i] += g[i] * db(x, z, y[i]);
    }
  });
}

// f(x) -> value; df(x, y) -> dy/dx.
template <class F, class DF>
Tensor unary(std::string_view op, const Tensor& a, F f, DF df) {
  auto A = a.data();
  std::vector<float> out(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = f(A[i]);
  return Tensor::make_result(op, a.shape(), std::move(out), {a}, [a, df](const Tensor& self) {
    auto ga = a.grad_sink();
    auto g = self.grad();
    auto y = self.data();
    auto A = a.data();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * df(A[i], y[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](float x, float y) { return x + y; }, [](float, float, float) { return 1.0f; },
      [](float, float, float) { return 1.0f; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](float x, float y) { return x - y; }, [](float, float, float) { return 1.0f; },
      [](float, float, float) { return -1.0f; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](float x, float y) { return x * y; }, [](float, float y, float) { return y; },
      [](float x, float, float) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](float x, float y) { return x / y; }, [](float, float y, float) { return 1.0f / y; },
      [](float, float y, float out) { return -out / y; });
}

Tensor neg(const Tensor& a) {
  return unary("neg", a, [](float x) { return -x; }, [](float, float) { return -1.0f; });
}

Tensor scale(const Tensor& a, float factor) {
  return unary(
      "scale", a, [factor](float x) { return factor * x; }, [factor](float, float) { return factor; });
}

Tensor add_scalar(const Tensor& a, float value) {
  return unary("add_scalar", a, [value](float x) { return x + value; }, [](float, float) { return 1.0f; });
}

Tensor sin(const Tensor& a) {
  return unary("sin", a, [](float x) { return std::sin(x); }, [](float x, float) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
  return unary("cos", a, [](float x) { return std::cos(x); }, [](float x, float) { return -std::sin(x); });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](float x) { return x > 0.0f ? x : 0.0f; }, [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

Tensor square(const Tensor& a) {
  return unary("square", a, [](float x) { return x * x; }, [](float x, float) { return 2.0f * x; });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      "sqrt", a, [](float x) { return std::sqrt(x); }, [](float, float y) { return y > 0.0f ? 0.5f / y : 0.0f; });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](float x) { return std::exp(x); }, [](float, float y) { return y; });
}

Tensor clamp(const Tensor& a, float lo, float hi) {
  return unary(
      "clamp", a, [lo, hi](float x) { return std::clamp(x, lo, hi); },
      [lo, hi](float x, float) { return (x >= lo && x <= hi) ? 1.0f : 0.0f; });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator-(const Tensor& a) { return neg(a); }
Tensor operator*(float s, const Tensor& a) { return scale(a, s); }
Tensor operator*(const Tensor& a, float s) { return scale(a, s); }

// ---------------------------------------------------------------------------
// Linear algebra

namespace {

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const float* A, const float* B, float* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    float* c = C + static_cast<std::size_t>(i) * n;
    const float* a = A + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const float av = a[p];
      if (av == 0.0f) continue;
      const float* b = B + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C[m,k] += A[m,n] * B[k,n]^T
void gemm_nt(const float* A, const float* B, float* C, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const float* a = A + static_cast<std::size_t>(i) * n;
    float* c = C + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const float* b = B + static_cast<std::size_t>(p) * n;
      float acc = 0.0f;
      for (int j = 0; j < n; ++j) acc += a[j] * b[j];
      c[p] += acc;
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]
void gemm_tn(const float* A, const float* B, float* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const float* a = A + static_cast<std::size_t>(i) * k;
    const float* b = B + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const float av = a[p];
      if (av == 0.0f) continue;
      float* c = C + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) mismatch("matmul", a.shape(), b.shape());
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<float> out(static_cast<std::size_t>(m) * n, 0.0f);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return Tensor::make_result("matmul", {m, n}, std::move(out), {a, b}, [a, b, m, k, n](const Tensor& self) {
    const float* g = self.grad().data();
    if (auto ga = a.grad_sink(); !ga.empty()) gemm_nt(g, b.data().data(), ga.data(), m, n, k);
    if (auto gb = b.grad_sink(); !gb.empty()) gemm_tn(a.data().data(), g, gb.data(), m, k, n);
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() != 2 || bias.size() != static_cast<std::size_t>(x.dim(1))) mismatch("add_bias", x.shape(), bias.shape());
  const int rows = x.dim(0), cols = x.dim(1);
  std::vector<float> out(x.data().begin(), x.data().end());
  auto bv = bias.data();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(r) * cols + c] += bv[c];
  }
  return Tensor::make_result("add_bias", x.shape(), std::move(out), {x, bias}, [x, bias, rows, cols](const Tensor& self) {
    auto g = self.grad();
    if (auto gx = x.grad_sink(); !gx.empty()) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    }
    if (auto gb = bias.grad_sink(); !gb.empty()) {
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) gb[c] += g[static_cast<std::size_t>(r) * cols + c];
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + to_string(a.shape()));
  return permute(a, {1, 0});
}

namespace {

// Maps each output flat index to its input flat index.
std::vector<std::size_t> permutation_index(const Shape& in, const std::vector<int>& axes, Shape& out_shape) {
  const int r = static_cast<int>(in.size());
  out_shape.resize(r);
  std::vector<std::size_t> in_stride(r, 1);
  for (int i = r - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * in[i + 1];
  for (int i = 0; i < r; ++i) out_shape[i] = in[axes[i]];
  std::vector<std::size_t> index(numel(in));
  std::vector<int> coord(r, 0);
  for (std::size_t o = 0; o < index.size(); ++o) {
    std::size_t src = 0;
    for (int i = 0; i < r; ++i) src += coord[i] * in_stride[axes[i]];
    index[o] = src;
    for (int i = r - 1; i >= 0; --i) {
      if (++coord[i] < out_shape[i]) break;
      coord[i] = 0;
    }
  }
  return index;
}

}  // namespace

Tensor permute(const Tensor& a, std::vector<int> axes) {
  const int r = a.rank();
  std::vector<int> seen(axes);
  std::sort(seen.begin(), seen.end());
  std::vector<int> expect(r);
  std::iota(expect.begin(), expect.end(), 0);
  if (seen != expect) throw ShapeError("permute: invalid axes for shape " + to_string(a.shape()));
  Shape out_shape;
  auto index = std::make_shared<std::vector<std::size_t>>(permutation_index(a.shape(), axes, out_shape));
  auto A = a.data();
  std::vector<float> out(index->size());
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = A[(*index)[o]];
  return Tensor::make_result("permute", out_shape, std::move(out), {a}, [a, index](const Tensor& self) {
    auto ga = a.grad_sink();
    auto g = self.grad();
    for (std::size_t o = 0; o < g.size(); ++o) ga[(*index)[o]] += g[o];
  });
}

// ---------------------------------------------------------------------------
// Reductions and shape ops

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  return Tensor::make_result("sum", {1}, {static_cast<float>(acc)}, {a}, [a](const Tensor& self) {
    const float g = self.grad()[0];
    for (float& v : a.grad_sink()) v += g;
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  const float inv = 1.0f / static_cast<float>(a.size());
  return Tensor::make_result("mean", {1}, {static_cast<float>(acc / a.size())}, {a}, [a, inv](const Tensor& self) {
    const float g = self.grad()[0] * inv;
    for (float& v : a.grad_sink()) v += g;
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  check_shape(shape);
  if (numel(shape) != a.size()) mismatch("reshape", a.shape(), shape);
  return Tensor::make_result("reshape", std::move(shape), a.to_vector(), {a}, [a](const Tensor& self) {
    auto ga = a.grad_sink();
    auto g = self.grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
  });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const int r = parts[0].rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("concat: axis out of range for " + to_string(parts[0].shape()));
  Shape out_shape = parts[0].shape();
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    if (static_cast<int>(s.size()) != r) mismatch("concat", parts[0].shape(), s);
    for (int i = 0; i < r; ++i) {
      if (i != axis && s[i] != parts[0].shape()[i]) mismatch("concat", parts[0].shape(), s);
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[i];
  for (int i = axis + 1; i < r; ++i) inner *= out_shape[i];
  const std::size_t out_row = static_cast<std::size_t>(out_shape[axis]) * inner;

  std::vector<float> out(numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(off);
    const std::size_t row = static_cast<std::size_t>(p.shape()[axis]) * inner;
    auto src = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.begin() + o * row, row, out.begin() + o * out_row + off);
    }
    off += row;
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return Tensor::make_result("concat", out_shape, std::move(out), parents,
                             [parents, offsets, outer, inner, out_row, axis](const Tensor& self) {
                               auto g = self.grad();
                               for (std::size_t k = 0; k < parents.size(); ++k) {
                                 auto gp = parents[k].grad_sink();
                                 if (gp.empty()) continue;
                                 const std::size_t row = static_cast<std::size_t>(parents[k].shape()[axis]) * inner;
                                 for (std::size_t o = 0; o < outer; ++o) {
                                   for (std::size_t j = 0; j < row; ++j) gp[o * row + j] += g[o * out_row + offsets[k] + j];
                                 }
                               }
                             });
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor narrow(const Tensor& a, int axis, int start, int length) {
  const int r = a.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r || start < 0 || length < 0 || start + length > a.shape()[axis]) {
    throw ShapeError("narrow: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") invalid for axis " + std::to_string(axis) + " of " + to_string(a.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.shape()[i];
  for (int i = axis + 1; i < r; ++i) inner *= a.shape()[i];
  const std::size_t in_row = static_cast<std::size_t>(a.shape()[axis]) * inner;
  const std::size_t out_row = static_cast<std::size_t>(length) * inner;
  const std::size_t off = static_cast<std::size_t>(start) * inner;
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  std::vector<float> out(outer * out_row);
  auto A = a.data();
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(A.begin() + o * in_row + off, out_row, out.begin() + o * out_row);
  return Tensor::make_result("narrow", out_shape, std::move(out), {a},
                             [a, outer, in_row, out_row, off](const Tensor& self) {
                               auto ga = a.grad_sink();
                               auto g = self.grad();
                               for (std::size_t o = 0; o < outer; ++o) {
                                 for (std::size_t j = 0; j < out_row; ++j) ga[o * in_row + off + j] += g[o * out_row + j];
                               }
                             });
}

Tensor softmax(const Tensor& a) {
  if (a.rank() < 1) throw ShapeError("softmax: scalar input");
  const std::size_t cols = static_cast<std::size_t>(a.shape().back());
  const std::size_t rows = cols ? a.size() / cols : 0;
  auto A = a.data();
  std::vector<float> out(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* x = A.data() + r * cols;
    float* y = out.data() + r * cols;
    const float mx = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = std::exp(x[c] - mx);
      z += y[c];
    }
    for (std::size_t c = 0; c < cols; ++c) y[c] = static_cast<float>(y[c] / z);
  }
  return Tensor::make_result("softmax", a.shape(), std::move(out), {a}, [a, rows, cols](const Tensor& self) {
    auto ga = a.grad_sink();
    auto g = self.grad();
    auto y = self.data();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        ga[i] += y[i] * (g[i] - static_cast<float>(dot));
      }
    }
  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) mismatch("cosine_similarity", a.shape(), b.shape());
  auto A = a.data();
  auto B = b.data();
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) {
    ab += static_cast<double>(A[i]) * B[i];
    aa += static_cast<double>(A[i]) * A[i];
    bb += static_cast<double>(B[i]) * B[i];
  }
  const double na = std::max(std::sqrt(aa), 1e-12);
  const double nb = std::max(std::sqrt(bb), 1e-12);
  const double c = ab / (na * nb);
  return Tensor::make_result("cosine_similarity", {1}, {static_cast<float>(c)}, {a, b},
                             [a, b, na, nb, c](const Tensor& self) {
                               const double g = self.grad()[0];
                               auto A = a.data();
                               auto B = b.data();
                               // d cos / da = b / (|a||b|) - cos * a / |a|^2
                               if (auto ga = a.grad_sink(); !ga.empty()) {
                                 for (std::size_t i = 0; i < ga.size(); ++i) {
                                   ga[i] += static_cast<float>(g * (B[i] / (na * nb) - c * A[i] / (na * na)));
                                 }
                               }
                               if (auto gb = b.grad_sink(); !gb.empty()) {
                                 for (std::size_t i = 0; i < gb.size(); ++i) {
                                   gb[i] += static_cast<float>(g * (A[i] / (na * nb) - c * B[i] / (nb * nb)));
                                 }
                               }
                             });
}

}  // namespace flowedit
