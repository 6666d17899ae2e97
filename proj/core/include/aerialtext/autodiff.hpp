// Copyright 2026 The aerialtext Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal define-by-run reverse-mode automatic differentiation over dense
// row-major float64 tensors. Every op records itself on its output when any
// input requires a gradient; backward() walks the recorded graph once in
// reverse topological order.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace aerialtext::ad {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class OpKind {
  Leaf,
  MatMul,
  Add,
  Sub,
  Mul,
  Div,
  Concat,
  Mean,
  MeanRows,
  Sum,
  Sigmoid,
  Softmax,
  LogSoftmax,
  Log,
  Exp,
  Relu,
  Abs,
  Minimum,
  Maximum,
  Clamp,
  L2Normalize,
  Slice,
  GatherRows,
  Transpose,
  ScalarMul,
  AddScalar,
  Reshape,
};

const char* op_name(OpKind kind);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  OpKind op = OpKind::Leaf;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer();
};

/// Shared handle to a graph node. Copies alias the same storage; use clone()
/// for an independent value copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor row(std::vector<double> data, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // Rank-1 tensors behave as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();
  bool is_leaf() const;

  Tensor clone() const;
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<Node>& node() const { return node_; }
  static Tensor wrap(std::shared_ptr<Node> node);

 private:
  std::shared_ptr<Node> node_;
};

/// Topologically ordered view of the nodes reachable from a root that take
/// part in differentiation (leaves first, root last).
class Graph {
 public:
  static Graph trace(const Tensor& root);
  std::span<const Node* const> nodes() const { return order_; }
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<const Node*> order_;
};

/// Accumulates d(loss)/d(leaf) into every reachable leaf requiring a gradient.
void backward(const Tensor& loss);

// Grad mode is thread-local. While disabled, ops record nothing.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Branch signature: a thread-local hash of every discrete decision taken by
// piecewise ops (relu masks, min/max selections, clamps, abs signs) plus any
// caller-noted choices. Finite-difference checks use it to detect when a
// perturbation crossed a kink.
class BranchSignature {
 public:
  BranchSignature();
  ~BranchSignature();
  BranchSignature(const BranchSignature&) = delete;
  BranchSignature& operator=(const BranchSignature&) = delete;
  std::uint64_t value() const;

 private:
  bool previous_active_;
  std::uint64_t previous_hash_;
};
void note_branch(std::uint64_t decision);

// ---- ops ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// Elementwise binary ops accept equal shapes, a [1,n] row broadcast over an
// [m,n] left operand, or a one-element right operand.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mean_rows(const Tensor& a);

Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
Tensor l2_normalize_rows(const Tensor& a);

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

inline constexpr double kNormalizeEpsilon = 1e-12;

struct OpAttrs {
  std::size_t axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  double scalar = 0.0;
  double scalar_hi = 0.0;
  std::vector<std::size_t> indices;
  Shape shape;
};

/// Generic entry point keyed by op kind; dispatches to the typed functions.
Tensor forward_op(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs = {});

}  // namespace aerialtext::ad
