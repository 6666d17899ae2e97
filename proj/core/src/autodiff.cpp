// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0

#include "aerialtext/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace aerialtext::ad {

namespace {

thread_local bool t_grad_enabled = true;
thread_local bool t_branch_active = false;
thread_local std::uint64_t t_branch_hash = 0xcbf29ce484222325ULL;

inline void mix_branch(std::uint64_t v) {
  t_branch_hash ^= v + 0x9e3779b97f4a7c15ULL + (t_branch_hash << 6) + (t_branch_hash >> 2);
}

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

[[noreturn]] void shape_fail(OpKind kind, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op_name(kind)) + ": shape mismatch " + shape_str(a) + " vs " +
                   shape_str(b));
}

[[noreturn]] void shape_fail(OpKind kind, const Shape& a, const std::string& why) {
  throw ShapeError(std::string(op_name(kind)) + ": " + why + " for shape " + shape_str(a));
}

Tensor make_result(OpKind kind, Shape shape, std::vector<double> value,
                   std::initializer_list<Tensor> inputs, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = kind;
  if (t_grad_enabled) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (const auto& in : inputs) node->inputs.push_back(in.node());
      node->backward = std::move(backward_fn);
    }
  }
  return Tensor::wrap(std::move(node));
}

// Same as above for a runtime-sized input list.
Tensor make_result(OpKind kind, Shape shape, std::vector<double> value,
                   std::span<const Tensor> inputs, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = kind;
  if (t_grad_enabled) {
    bool any = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      for (const auto& in : inputs) node->inputs.push_back(in.node());
      node->backward = std::move(backward_fn);
    }
  }
  return Tensor::wrap(std::move(node));
}

enum class Broadcast { Same, Row, Scalar };

Broadcast broadcast_mode(OpKind kind, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (b.numel() == 1) return Broadcast::Scalar;
  if (a.rank() == 2 && b.rows() == 1 && b.cols() == a.cols() && b.rank() <= 2) {
    return Broadcast::Row;
  }
  shape_fail(kind, a.shape(), b.shape());
}

inline std::size_t broadcast_index(Broadcast mode, std::size_t i, std::size_t cols) {
  switch (mode) {
    case Broadcast::Same: return i;
    case Broadcast::Row: return i % cols;
    case Broadcast::Scalar: return 0;
  }
  return 0;
}

// Elementwise binary op with broadcasting of the right operand. `da` and `db`
// return the local partials given (x, y, out).
template <class F, class DA, class DB>
Tensor binary_op(OpKind kind, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  const Broadcast mode = broadcast_mode(kind, a, b);
  const std::size_t n = a.numel();
  const std::size_t cols = a.cols();
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i], bv[broadcast_index(mode, i, cols)]);
  return make_result(kind, a.shape(), std::move(out), {a, b}, [mode, cols, da, db](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const std::size_t count = self.value.size();
    if (na.requires_grad) {
      auto& ga = na.grad_buffer();
      for (std::size_t i = 0; i < count; ++i) {
        const double y = nb.value[broadcast_index(mode, i, cols)];
        ga[i] += self.grad[i] * da(na.value[i], y, self.value[i]);
      }
    }
    if (nb.requires_grad) {
      auto& gb = nb.grad_buffer();
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = broadcast_index(mode, i, cols);
        gb[j] += self.grad[i] * db(na.value[i], nb.value[j], self.value[i]);
      }
    }
  });
}

// Elementwise unary op; `d` returns the local derivative given (x, out).
template <class F, class D>
Tensor unary_op(OpKind kind, const Tensor& a, F f, D d) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return make_result(kind, a.shape(), std::move(out), {a}, [d](Node& self) {
    Node& na = *self.inputs[0];
    auto& ga = na.grad_buffer();
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      ga[i] += self.grad[i] * d(na.value[i], self.value[i]);
    }
  });
}

void require_matrix(OpKind kind, const Tensor& a) {
  if (a.rank() != 1 && a.rank() != 2) shape_fail(kind, a.shape(), "expected rank 1 or 2");
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Concat: return "concat";
    case OpKind::Mean: return "mean";
    case OpKind::MeanRows: return "mean_rows";
    case OpKind::Sum: return "sum";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Softmax: return "softmax";
    case OpKind::LogSoftmax: return "log_softmax";
    case OpKind::Log: return "log";
    case OpKind::Exp: return "exp";
    case OpKind::Relu: return "relu";
    case OpKind::Abs: return "abs";
    case OpKind::Minimum: return "minimum";
    case OpKind::Maximum: return "maximum";
    case OpKind::Clamp: return "clamp";
    case OpKind::L2Normalize: return "l2_normalize";
    case OpKind::Slice: return "slice";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::Transpose: return "transpose";
    case OpKind::ScalarMul: return "scalar_mul";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::Reshape: return "reshape";
  }
  return "unknown";
}

std::vector<double>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape.empty()) throw ShapeError("tensor: empty shape");
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor: zero extent in shape " + shape_str(shape));
  }
  if (product(shape) != data.size()) {
    throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(data);
  node_->requires_grad = requires_grad;
  if (requires_grad) node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const std::size_t n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::row(std::vector<double> data, bool requires_grad) {
  const std::size_t n = data.size();
  return Tensor({1, n}, std::move(data), requires_grad);
}

Tensor Tensor::wrap(std::shared_ptr<Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->value.size(); }
std::size_t Tensor::rows() const { return rank() == 2 ? shape()[0] : 1; }
std::size_t Tensor::cols() const { return shape().back(); }
std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::mutable_data() { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor is not scalar, shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return node_->grad_buffer(); }

void Tensor::zero_grad() {
  if (node_->requires_grad) node_->grad.assign(node_->value.size(), 0.0);
}

bool Tensor::is_leaf() const { return node_->op == OpKind::Leaf; }

Tensor Tensor::clone() const { return Tensor(shape(), node_->value, requires_grad()); }
Tensor Tensor::detach() const { return Tensor(shape(), node_->value, false); }

// ---- graph ----------------------------------------------------------------

Graph Graph::trace(const Tensor& root) {
  Graph g;
  if (!root.defined() || !root.requires_grad()) return g;
  std::unordered_set<const Node*> visited;
  std::vector<std::pair<const Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      g.order_.push_back(node);
      stack.pop_back();
    }
  }
  return g;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  const Graph graph = Graph::trace(loss);
  loss.node()->grad_buffer()[0] += 1.0;
  const auto nodes = graph.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    Node& node = const_cast<Node&>(**it);
    if (node.backward && !node.grad.empty()) node.backward(node);
  }
}

bool grad_enabled() { return t_grad_enabled; }
NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

BranchSignature::BranchSignature()
    : previous_active_(t_branch_active), previous_hash_(t_branch_hash) {
  t_branch_active = true;
  t_branch_hash = 0xcbf29ce484222325ULL;
}
BranchSignature::~BranchSignature() {
  t_branch_active = previous_active_;
  t_branch_hash = previous_hash_;
}
std::uint64_t BranchSignature::value() const { return t_branch_hash; }

void note_branch(std::uint64_t decision) {
  if (t_branch_active) mix_branch(decision);
}

// ---- ops ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    shape_fail(OpKind::MatMul, a.shape(), b.shape());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* A = a.data().data();
  const double* B = b.data().data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return make_result(OpKind::MatMul, {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const double* dC = self.grad.data();
    if (na.requires_grad) {
      auto& ga = na.grad_buffer();
      const double* B = nb.value.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* drow = dC + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = B + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += drow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (nb.requires_grad) {
      auto& gb = nb.grad_buffer();
      const double* A = na.value.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* drow = dC + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          double* grow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) grow[j] += av * drow[j];
        }
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      OpKind::Add, a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      OpKind::Sub, a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      OpKind::Mul, a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      OpKind::Div, a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail(OpKind::Minimum, a.shape(), b.shape());
  if (t_branch_active) {
    for (std::size_t i = 0; i < a.numel(); ++i) mix_branch(a.data()[i] <= b.data()[i] ? 3 : 5);
  }
  return binary_op(
      OpKind::Minimum, a, b, [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail(OpKind::Maximum, a.shape(), b.shape());
  if (t_branch_active) {
    for (std::size_t i = 0; i < a.numel(); ++i) mix_branch(a.data()[i] >= b.data()[i] ? 7 : 11);
  }
  return binary_op(
      OpKind::Maximum, a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  for (const auto& p : parts) require_matrix(OpKind::Concat, p);
  const Tensor& first = parts.front();
  std::size_t rows = 0, cols = 0;
  if (axis == 0) {
    cols = first.cols();
    for (const auto& p : parts) {
      if (p.cols() != cols) shape_fail(OpKind::Concat, first.shape(), p.shape());
      rows += p.rows();
    }
  } else {
    rows = first.rows();
    for (const auto& p : parts) {
      if (p.rows() != rows) shape_fail(OpKind::Concat, first.shape(), p.shape());
      cols += p.cols();
    }
  }
  std::vector<double> out(rows * cols);
  std::vector<std::size_t> offsets;
  offsets.reserve(parts.size());
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const auto pv = p.data();
    if (axis == 0) {
      std::copy(pv.begin(), pv.end(), out.begin() + static_cast<std::ptrdiff_t>(offset * cols));
      offset += p.rows();
    } else {
      const std::size_t pc = p.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(r * pc), pc,
                    out.begin() + static_cast<std::ptrdiff_t>(r * cols + offset));
      }
      offset += pc;
    }
  }
  return make_result(OpKind::Concat, {rows, cols}, std::move(out), parts,
                     [axis, rows, cols, offsets](Node& self) {
                       for (std::size_t t = 0; t < self.inputs.size(); ++t) {
                         Node& in = *self.inputs[t];
                         if (!in.requires_grad) continue;
                         auto& g = in.grad_buffer();
                         if (axis == 0) {
                           const std::size_t base = offsets[t] * cols;
                           for (std::size_t i = 0; i < in.value.size(); ++i) {
                             g[i] += self.grad[base + i];
                           }
                         } else {
                           const std::size_t pc = in.value.size() / rows;
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t c = 0; c < pc; ++c) {
                               g[r * pc + c] += self.grad[r * cols + offsets[t] + c];
                             }
                           }
                         }
                       }
                     });
}

Tensor sum(const Tensor& a) {
  const auto av = a.data();
  double s = 0.0;
  for (double v : av) s += v;
  return make_result(OpKind::Sum, {1}, {s}, {a}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const auto av = a.data();
  double s = 0.0;
  for (double v : av) s += v;
  const double n = static_cast<double>(av.size());
  return make_result(OpKind::Mean, {1}, {s / n}, {a}, [n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const double d = self.grad[0] / n;
    for (auto& v : g) v += d;
  });
}

Tensor mean_rows(const Tensor& a) {
  require_matrix(OpKind::MeanRows, a);
  const std::size_t m = a.rows(), n = a.cols();
  const auto av = a.data();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j] += av[i * n + j];
  }
  const double inv = 1.0 / static_cast<double>(m);
  for (auto& v : out) v *= inv;
  return make_result(OpKind::MeanRows, {1, n}, std::move(out), {a}, [m, n, inv](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j] * inv;
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      OpKind::Sigmoid, a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  if (t_branch_active) {
    for (double v : a.data()) mix_branch(v > 0.0 ? 13 : 17);
  }
  return unary_op(
      OpKind::Relu, a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      OpKind::Exp, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      OpKind::Log, a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor abs(const Tensor& a) {
  if (t_branch_active) {
    for (double v : a.data()) mix_branch(v > 0.0 ? 19 : (v < 0.0 ? 23 : 29));
  }
  return unary_op(
      OpKind::Abs, a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must not exceed hi");
  if (t_branch_active) {
    for (double v : a.data()) mix_branch(v < lo ? 31 : (v > hi ? 37 : 41));
  }
  return unary_op(
      OpKind::Clamp, a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor softmax_rows(const Tensor& a) {
  require_matrix(OpKind::Softmax, a);
  const std::size_t m = a.rows(), n = a.cols();
  const auto av = a.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = av.data() + i * n;
    double* y = out.data() + i * n;
    const double mx = *std::max_element(x, x + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      s += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= s;
  }
  return make_result(OpKind::Softmax, a.shape(), std::move(out), {a}, [m, n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = self.value.data() + i * n;
      const double* dy = self.grad.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (dy[j] - dot);
    }
  });
}

Tensor log_softmax_rows(const Tensor& a) {
  require_matrix(OpKind::LogSoftmax, a);
  const std::size_t m = a.rows(), n = a.cols();
  const auto av = a.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = av.data() + i * n;
    const double mx = *std::max_element(x, x + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(x[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[j] - lse;
  }
  return make_result(OpKind::LogSoftmax, a.shape(), std::move(out), {a}, [m, n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = self.value.data() + i * n;
      const double* dy = self.grad.data() + i * n;
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) total += dy[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += dy[j] - std::exp(y[j]) * total;
    }
  });
}

Tensor l2_normalize_rows(const Tensor& a) {
  require_matrix(OpKind::L2Normalize, a);
  const std::size_t m = a.rows(), n = a.cols();
  const auto av = a.data();
  std::vector<double> out(m * n);
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += av[i * n + j] * av[i * n + j];
    norms[i] = std::sqrt(ss + kNormalizeEpsilon);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] / norms[i];
  }
  return make_result(OpKind::L2Normalize, a.shape(), std::move(out), {a},
                     [m, n, norms](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t i = 0; i < m; ++i) {
                         const double* y = self.value.data() + i * n;
                         const double* dy = self.grad.data() + i * n;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
                         for (std::size_t j = 0; j < n; ++j) {
                           g[i * n + j] += (dy[j] - y[j] * dot) / norms[i];
                         }
                       }
                     });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix(OpKind::Slice, a);
  if (begin >= end || end > a.rows()) {
    shape_fail(OpKind::Slice, a.shape(),
               "row range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid");
  }
  const std::size_t n = a.cols();
  const auto av = a.data();
  std::vector<double> out(av.begin() + static_cast<std::ptrdiff_t>(begin * n),
                          av.begin() + static_cast<std::ptrdiff_t>(end * n));
  return make_result(OpKind::Slice, {end - begin, n}, std::move(out), {a},
                     [begin, n](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t i = 0; i < self.value.size(); ++i) {
                         g[begin * n + i] += self.grad[i];
                       }
                     });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix(OpKind::Slice, a);
  if (begin >= end || end > a.cols()) {
    shape_fail(OpKind::Slice, a.shape(),
               "column range [" + std::to_string(begin) + "," + std::to_string(end) +
                   ") invalid");
  }
  const std::size_t m = a.rows(), n = a.cols(), w = end - begin;
  const auto av = a.data();
  std::vector<double> out(m * w);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = av[r * n + begin + c];
  }
  return make_result(OpKind::Slice, {m, w}, std::move(out), {a}, [m, n, w, begin](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < w; ++c) g[r * n + begin + c] += self.grad[r * w + c];
    }
  });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices) {
  require_matrix(OpKind::GatherRows, a);
  if (indices.empty()) shape_fail(OpKind::GatherRows, a.shape(), "empty index list");
  const std::size_t n = a.cols();
  const auto av = a.data();
  std::vector<double> out(indices.size() * n);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= a.rows()) {
      shape_fail(OpKind::GatherRows, a.shape(),
                 "row index " + std::to_string(indices[r]) + " out of range");
    }
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(indices[r] * n), n,
                out.begin() + static_cast<std::ptrdiff_t>(r * n));
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result(OpKind::GatherRows, {idx.size(), n}, std::move(out), {a},
                     [idx, n](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t r = 0; r < idx.size(); ++r) {
                         for (std::size_t c = 0; c < n; ++c) g[idx[r] * n + c] += self.grad[r * n + c];
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  require_matrix(OpKind::Transpose, a);
  const std::size_t m = a.rows(), n = a.cols();
  const auto av = a.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  }
  return make_result(OpKind::Transpose, {n, m}, std::move(out), {a}, [m, n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (product(shape) != a.numel()) shape_fail(OpKind::Reshape, a.shape(), shape);
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(OpKind::Reshape, std::move(shape), std::move(out), {a}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_op(
      OpKind::ScalarMul, a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary_op(
      OpKind::AddScalar, a, [offset](double x) { return x + offset; },
      [](double, double) { return 1.0; });
}

Tensor forward_op(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs) {
  auto need = [&](std::size_t count) {
    if (inputs.size() != count) {
      throw std::invalid_argument(std::string(op_name(kind)) + ": expected " +
                                  std::to_string(count) + " inputs, got " +
                                  std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case OpKind::MatMul: need(2); return matmul(inputs[0], inputs[1]);
    case OpKind::Add: need(2); return add(inputs[0], inputs[1]);
    case OpKind::Sub: need(2); return sub(inputs[0], inputs[1]);
    case OpKind::Mul: need(2); return mul(inputs[0], inputs[1]);
    case OpKind::Div: need(2); return div(inputs[0], inputs[1]);
    case OpKind::Minimum: need(2); return minimum(inputs[0], inputs[1]);
    case OpKind::Maximum: need(2); return maximum(inputs[0], inputs[1]);
    case OpKind::Concat: return concat(inputs, attrs.axis);
    case OpKind::Mean: need(1); return mean(inputs[0]);
    case OpKind::MeanRows: need(1); return mean_rows(inputs[0]);
    case OpKind::Sum: need(1); return sum(inputs[0]);
    case OpKind::Sigmoid: need(1); return sigmoid(inputs[0]);
    case OpKind::Softmax: need(1); return softmax_rows(inputs[0]);
    case OpKind::LogSoftmax: need(1); return log_softmax_rows(inputs[0]);
    case OpKind::Log: need(1); return log(inputs[0]);
    case OpKind::Exp: need(1); return exp(inputs[0]);
    case OpKind::Relu: need(1); return relu(inputs[0]);
    case OpKind::Abs: need(1); return abs(inputs[0]);
    case OpKind::Clamp: need(1); return clamp(inputs[0], attrs.scalar, attrs.scalar_hi);
    case OpKind::L2Normalize: need(1); return l2_normalize_rows(inputs[0]);
    case OpKind::Slice:
      need(1);
      return attrs.axis == 0 ? slice_rows(inputs[0], attrs.begin, attrs.end)
                             : slice_cols(inputs[0], attrs.begin, attrs.end);
    case OpKind::GatherRows: need(1); return gather_rows(inputs[0], attrs.indices);
    case OpKind::Transpose: need(1); return transpose(inputs[0]);
    case OpKind::ScalarMul: need(1); return scale(inputs[0], attrs.scalar);
    case OpKind::AddScalar: need(1); return add_scalar(inputs[0], attrs.scalar);
    case OpKind::Reshape: need(1); return reshape(inputs[0], attrs.shape);
    case OpKind::Leaf: break;
  }
  throw std::invalid_argument(std::string("forward_op: unsupported op ") + op_name(kind));
}

}  // namespace aerialtext::ad
