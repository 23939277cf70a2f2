// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation on dense double matrices.
//
// A Tape is an append-only list of primitive operations. Every Var is a handle
// to one node of one tape. Because inputs must exist before an operation can be
// recorded, the node list is always in topological order.
//
// grad() records the backward pass onto the same tape using the very same
// primitives, so the gradients it returns are ordinary Vars that can be fed to
// further operations and differentiated again (backward-of-backward, to any
// depth). grad_values() runs the identical rules on plain matrices when the
// result does not need to be differentiated, which is much cheaper.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

namespace kcciol::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Flat gradient, same length and ordering as the parameter vector it was
/// taken against.
using GradientVector = Eigen::VectorXd;

enum class Op : std::uint8_t {
  Leaf,
  Constant,
  Add,
  Sub,
  Mul,            // elementwise
  Scale,          // by a compile-time-free scalar constant
  MatMul,         // op(a) * op(b), op = optional transpose
  AddBias,        // x (n x m) + b (1 x m) broadcast over rows
  SumRows,        // n x m -> 1 x m
  BroadcastRows,  // 1 x m -> n x m
  RowSum,         // n x m -> n x 1
  BroadcastCols,  // n x 1 -> n x m
  Relu,
  ReluGrad,       // g * [x > 0]; x is not differentiated
  Abs,
  SignMul,        // g * sign(x); sign(0) = 0; x is not differentiated
  Square,
  Sum,            // -> 1 x 1
  BroadcastScalar,
  Sin,
  Cos,
  Softmax,        // row-wise
  Mse,            // mean squared difference -> 1 x 1
  SoftmaxXent,    // mean row-wise cross-entropy against a constant target distribution
  AddN,
};

const char* op_name(Op op) noexcept;

struct Node {
  Op op = Op::Leaf;
  std::int32_t a = -1;
  std::int32_t b = -1;
  std::vector<std::int32_t> more;  // AddN operands beyond a, b
  double scalar = 0.0;
  bool transpose_a = false;
  bool transpose_b = false;
  bool needs_grad = false;
  Matrix value;
};

class Tape;

class Var {
 public:
  Var() = default;

  Tape* tape() const noexcept { return tape_; }
  std::int32_t index() const noexcept { return index_; }
  bool valid() const noexcept { return tape_ != nullptr && index_ >= 0; }

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Value of a 1 x 1 node.
  double scalar() const;
  bool needs_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::int32_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::int32_t index_ = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable leaf.
  Var variable(Matrix value);
  Var constant(Matrix value);
  Var constant(double value);

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(std::int32_t index) const { return nodes_.at(static_cast<std::size_t>(index)); }
  Var var(std::int32_t index);

  /// Appends a fully formed node. Throws NumericError when the value is not finite.
  Var push(Node node);

 private:
  std::deque<Node> nodes_;
};

// --- primitives -----------------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var matmul(const Var& a, const Var& b, bool transpose_a = false, bool transpose_b = false);
Var add_bias(const Var& x, const Var& bias);
Var sum_rows(const Var& x);
Var broadcast_rows(const Var& row, Index rows);
Var row_sum(const Var& x);
Var broadcast_cols(const Var& col, Index cols);
Var relu(const Var& x);
Var relu_grad(const Var& g, const Var& x);
Var abs(const Var& x);
Var sign_mul(const Var& g, const Var& x);
Var square(const Var& x);
Var sum(const Var& x);
Var broadcast_scalar(const Var& s, Index rows, Index cols);
Var sin(const Var& x);
Var cos(const Var& x);
Var softmax(const Var& logits);
Var mse(const Var& prediction, const Var& target);
Var softmax_cross_entropy(const Var& logits, const Var& target_distribution);
Var add_n(std::span<const Var> terms);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator-(const Var& a) { return scale(a, -1.0); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }
inline Var operator*(const Var& a, double c) { return scale(a, c); }

// --- differentiation -------------------------------------------------------

/// d y / d wrt[i], recorded on the tape so the result is itself differentiable.
/// y must be 1 x 1. Inputs that y does not depend on get a zero constant.
std::vector<Var> grad(const Var& y, std::span<const Var> wrt);

/// Same derivatives as grad(), evaluated numerically without growing the tape.
std::vector<Matrix> grad_values(const Var& y, std::span<const Var> wrt);

/// Central-difference estimate (f(p + eps e_i) - f(p - eps e_i)) / 2 eps.
GradientVector finite_diff_grad(const std::function<double(const Vector&)>& objective,
                                const Vector& params, double eps);

/// Throws NumericError naming `what` if any entry is NaN or Inf.
void require_finite(const Eigen::Ref<const Matrix>& values, const char* what);

}  // namespace kcciol::ad
